use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fibercryst::cli::{exit_code, parse_config_with, run_scenario, Command};

/// Thermal-gas self-organization along an optical nanofiber.
#[derive(Parser, Debug)]
#[command(name = "fibercryst", version)]
struct Args {
    /// threshold, branches, stationary, dynamics or reduced
    command: Command,
    /// Scenario file (key = value)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed of the scenario file
    #[arg(long)]
    seed: Option<u64>,
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("FIBERCRYST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FIBERCRYST_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    if let Err(m) = configure_threads() {
        eprintln!("error: {m}");
        return ExitCode::from(2);
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut config = match parse_config_with(&text, Some(args.command)) {
        Ok(c) => c,
        Err(errs) => {
            for e in &errs.0 {
                eprintln!("{}: {e}", args.config.display());
            }
            return ExitCode::from(2);
        }
    };
    if let Some(s) = args.seed {
        config.seed = s;
        config.dynamics.seed = s;
        config.raw.insert("seed".into(), s.to_string());
    }
    match run_scenario(&config, &args.out) {
        Ok(report) => {
            for o in &report.outputs {
                println!("{}", o.display());
            }
            println!("{}", report.manifest.display());
            if report.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &report.failures {
                    eprintln!("error: {f}");
                }
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
