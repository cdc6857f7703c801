//! Scenario files, execution and CSV output for the `fibercryst` binary.
//!
//! A scenario is a flat `key = value` file; `#` starts a comment. Numbers may
//! be written as products and quotients of literals and `pi`, e.g.
//! `zeta0 = 150/pi`.
//!
//! Every CSV starts with two comment lines, `# fibercryst schema=<name>
//! version=<v>` and `# params ...`, followed by the column header. Floats are
//! written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::branches::{trace_branch, Regime};
use crate::dynamics::{run_with, write_checkpoint, RunOptions, DEFAULT_DYNAMICS_PPW, DEFAULT_KERNEL_WIDTH, MAX_DT, MIN_PARTICLES};
use crate::error::{Error, Result};
use crate::model::Params;
use crate::reduced_hamiltonian::{integrate_reduced, FieldCoupling, ReducedState, ThermalG};
use crate::stability::threshold_scan;
use crate::stationary::{
    decompose, density_diagnostics, fraction_dips, fraction_minimum, order_parameter, potential_envelopes, solve_branch,
    ContinuationOptions, DEFAULT_PPW, MIN_PPW,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const THRESHOLD_COLUMNS: [&str; 4] = ["n", "eps", "eps_over_eps_c", "gamma"];
pub const BRANCH_COLUMNS: [&str; 6] = ["n", "eps", "eps_over_eps_c", "theta", "regime", "fold_flag"];
pub const STATIONARY_COLUMNS: [&str; 9] =
    ["xi", "re_e", "im_e", "nu", "theta_local", "Nplus", "Nminus", "env_pump_fiber", "env_fiber_fiber"];
pub const DYNAMICS_COLUMNS: [&str; 5] = ["t", "theta", "bunching", "energy", "escaped"];
pub const REDUCED_COLUMNS: [&str; 5] = ["z", "Theta", "D", "Delta", "Hbar"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Threshold,
    Branches,
    Stationary,
    Dynamics,
    Reduced,
}

impl Command {
    pub const ALL: [Command; 5] =
        [Command::Threshold, Command::Branches, Command::Stationary, Command::Dynamics, Command::Reduced];

    pub fn name(self) -> &'static str {
        match self {
            Command::Threshold => "threshold",
            Command::Branches => "branches",
            Command::Stationary => "stationary",
            Command::Dynamics => "dynamics",
            Command::Reduced => "reduced",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command '{s}' (expected threshold, branches, stationary, dynamics or reduced)"))
    }
}

/// Which branch equations a `branches` scenario traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeChoice {
    /// Weak for ζ₀ ≤ 1, strong for ζ₀ ≥ 10, both in between.
    Auto,
    One(Regime),
    Both,
}

impl RegimeChoice {
    pub fn regimes(self, zeta0: f64) -> Vec<Regime> {
        match self {
            RegimeChoice::One(r) => vec![r],
            RegimeChoice::Both => vec![Regime::Weak, Regime::Strong],
            RegimeChoice::Auto if zeta0 <= 1.0 => vec![Regime::Weak],
            RegimeChoice::Auto if zeta0 >= 10.0 => vec![Regime::Strong],
            RegimeChoice::Auto => vec![Regime::Weak, Regime::Strong],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub eps_min: f64,
    pub eps_max: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        let m = self.steps.max(2);
        (0..m)
            .map(|k| self.eps_min + (self.eps_max - self.eps_min) * k as f64 / (m - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedOptions {
    pub theta: f64,
    pub d: f64,
    pub delta: f64,
    pub z_start: f64,
    pub z_end: f64,
    pub samples: usize,
    pub trap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub command: Command,
    pub params: Params,
    pub seed: u64,
    pub sweep: Option<Sweep>,
    pub regime: RegimeChoice,
    /// Branch indices solved by a `stationary` scenario.
    pub branches: Vec<usize>,
    pub ppw: usize,
    pub dynamics: RunOptions,
    pub checkpoint: bool,
    pub reduced: Option<ReducedOptions>,
    /// Keys as written in the file, for the manifest.
    pub raw: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every problem found in a scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

use Command::*;

/// Keys and the commands that accept them.
const KEYS: &[(&str, &[Command])] = &[
    ("command", &Command::ALL),
    ("zeta0", &Command::ALL),
    ("ell", &Command::ALL),
    ("n_max", &[Threshold, Branches, Stationary]),
    ("seed", &Command::ALL),
    ("eps", &[Stationary, Dynamics, Reduced]),
    ("eps_over_eps_c", &[Stationary, Dynamics, Reduced]),
    ("eps_min", &[Threshold, Branches]),
    ("eps_max", &[Threshold, Branches]),
    ("eps_over_eps_c_min", &[Threshold, Branches]),
    ("eps_over_eps_c_max", &[Threshold, Branches]),
    ("eps_steps", &[Threshold, Branches]),
    ("regime", &[Branches]),
    ("branches", &[Stationary]),
    ("ppw", &[Stationary, Dynamics]),
    ("particles", &[Dynamics]),
    ("t_final", &[Dynamics]),
    ("dt", &[Dynamics]),
    ("field_refresh_every", &[Dynamics]),
    ("record_every", &[Dynamics]),
    ("kernel_width", &[Dynamics]),
    ("checkpoint", &[Dynamics]),
    ("theta", &[Reduced]),
    ("d", &[Reduced]),
    ("delta", &[Reduced]),
    ("z_start", &[Reduced]),
    ("z_end", &[Reduced]),
    ("samples", &[Reduced]),
    ("trap", &[Reduced]),
];

/// Literal, `pi`, or a chain of them joined by `*` and `/`.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let mut acc = 1.0;
    let mut op = '*';
    let mut rest = s;
    loop {
        let cut = rest.find(['*', '/']).unwrap_or(rest.len());
        let tok = rest[..cut].trim();
        let v = match tok {
            "pi" => std::f64::consts::PI,
            "" => return Err(format!("'{s}' is not a number")),
            t => t.parse::<f64>().map_err(|_| format!("'{s}' is not a number"))?,
        };
        acc = if op == '*' { acc * v } else { acc / v };
        if cut == rest.len() {
            break;
        }
        op = rest.as_bytes()[cut] as char;
        rest = &rest[cut + 1..];
    }
    if !acc.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(acc)
}

struct Entry {
    line: usize,
    value: String,
}

struct Reader<'a> {
    entries: &'a BTreeMap<String, Entry>,
    errors: Vec<ConfigError>,
}

impl Reader<'_> {
    fn fail(&mut self, key: &str, msg: String) {
        let line = self.entries.get(key).map(|e| e.line);
        self.errors.push(ConfigError { line, message: msg });
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|e| (e.line, e.value.as_str()))
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        let (_, v) = self.raw(key)?;
        match parse_number(v) {
            Ok(x) => Some(x),
            Err(m) => {
                self.fail(key, format!("{key}: {m}"));
                None
            }
        }
    }

    /// Float checked against a predicate; `None` when absent or invalid.
    fn float_where(&mut self, key: &str, ok: impl Fn(f64) -> bool, what: &str) -> Option<f64> {
        let x = self.float(key)?;
        if ok(x) {
            Some(x)
        } else {
            self.fail(key, format!("{key} must be {what}, got {x}"));
            None
        }
    }

    fn uint(&mut self, key: &str, min: u64) -> Option<u64> {
        let (_, v) = self.raw(key)?;
        match v.parse::<u64>() {
            Ok(x) if x >= min => Some(x),
            Ok(x) => {
                self.fail(key, format!("{key} must be at least {min}, got {x}"));
                None
            }
            Err(_) => {
                self.fail(key, format!("{key}: '{v}' is not a non-negative integer"));
                None
            }
        }
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        let (_, v) = self.raw(key)?;
        match v {
            "true" | "yes" | "1" => Some(true),
            "false" | "no" | "0" => Some(false),
            _ => {
                self.fail(key, format!("{key}: '{v}' is not a boolean"));
                None
            }
        }
    }

    fn require<T>(&mut self, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && !self.entries.contains_key(key) {
            self.errors.push(ConfigError { line: None, message: format!("missing required key '{key}'") });
        }
        v
    }
}

/// Parse a scenario file whose `command` key is mandatory.
pub fn parse_config(text: &str) -> std::result::Result<ScenarioConfig, ConfigErrors> {
    parse_config_with(text, None)
}

/// Parse a scenario file. `command` comes from the file or, if absent there,
/// from the argument; both present and different is an error.
pub fn parse_config_with(text: &str, command: Option<Command>) -> std::result::Result<ScenarioConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            errors.push(ConfigError { line: Some(line), message: format!("expected key = value, got '{content}'") });
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(name, _)| *name == k) {
            errors.push(ConfigError { line: Some(line), message: format!("unknown key '{k}'") });
            continue;
        }
        if v.is_empty() {
            errors.push(ConfigError { line: Some(line), message: format!("{k}: missing value") });
            continue;
        }
        if let Some(prev) = entries.get(k) {
            errors.push(ConfigError {
                line: Some(line),
                message: format!("duplicate key '{k}' (first set on line {})", prev.line),
            });
            continue;
        }
        entries.insert(k.to_string(), Entry { line, value: v.to_string() });
    }

    let file_command = match entries.get("command") {
        Some(e) => match e.value.parse::<Command>() {
            Ok(c) => Some(c),
            Err(m) => {
                errors.push(ConfigError { line: Some(e.line), message: m });
                return Err(ConfigErrors(errors));
            }
        },
        None => None,
    };
    let command = match (file_command, command) {
        (Some(a), Some(b)) if a != b => {
            errors.push(ConfigError {
                line: entries.get("command").map(|e| e.line),
                message: format!("file sets command '{a}' but '{b}' was requested"),
            });
            return Err(ConfigErrors(errors));
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            errors.push(ConfigError { line: None, message: "missing required key 'command'".into() });
            return Err(ConfigErrors(errors));
        }
    };
    for (k, e) in &entries {
        let allowed = KEYS.iter().find(|(name, _)| name == k).map(|(_, c)| *c).unwrap_or(&[]);
        if !allowed.contains(&command) {
            errors.push(ConfigError { line: Some(e.line), message: format!("key '{k}' is not used by '{command}'") });
        }
    }

    let mut r = Reader { entries: &entries, errors };
    let zeta0 = r.float_where("zeta0", |x| x > 0.0, "positive");
    let zeta0 = r.require("zeta0", zeta0);
    let ell = r.float_where("ell", |x| x > 0.0, "positive").unwrap_or(100.0);
    let n_max = r.uint("n_max", 0).unwrap_or(3) as usize;
    let seed = r.uint("seed", 0).unwrap_or(1);
    let eps_c = zeta0.map(|z| 0.5 / z);

    // point value of ε, absolute or relative to ε_c
    let eps = match command {
        Stationary | Dynamics | Reduced => {
            let abs = r.float_where("eps", |x| x >= 0.0, "non-negative");
            let rel = r.float_where("eps_over_eps_c", |x| x >= 0.0, "non-negative");
            match (r.raw("eps").is_some(), r.raw("eps_over_eps_c").is_some()) {
                (true, true) => {
                    r.fail("eps_over_eps_c", "set either eps or eps_over_eps_c, not both".into());
                    None
                }
                (false, false) => {
                    r.errors.push(ConfigError { line: None, message: "missing required key 'eps' (or 'eps_over_eps_c')".into() });
                    None
                }
                _ => abs.or_else(|| Some(rel? * eps_c?)),
            }
        }
        _ => Some(0.0),
    };

    let sweep = match command {
        Threshold | Branches => {
            let steps = r.uint("eps_steps", 2).unwrap_or(if command == Threshold { 101 } else { 201 }) as usize;
            let abs = (r.raw("eps_min").is_some(), r.raw("eps_max").is_some());
            let rel = (r.raw("eps_over_eps_c_min").is_some(), r.raw("eps_over_eps_c_max").is_some());
            let nonneg = |x: f64| x >= 0.0;
            let range = match (abs, rel) {
                ((true, true), (false, false)) => {
                    let a = r.float_where("eps_min", nonneg, "non-negative");
                    let b = r.float_where("eps_max", nonneg, "non-negative");
                    a.zip(b)
                }
                ((false, false), (true, true)) => {
                    let a = r.float_where("eps_over_eps_c_min", nonneg, "non-negative");
                    let b = r.float_where("eps_over_eps_c_max", nonneg, "non-negative");
                    a.zip(b).zip(eps_c).map(|((a, b), c)| (a * c, b * c))
                }
                _ => {
                    r.errors.push(ConfigError {
                        line: None,
                        message: "give the sweep as eps_min and eps_max, or as eps_over_eps_c_min and eps_over_eps_c_max"
                            .into(),
                    });
                    None
                }
            };
            match range {
                Some((a, b)) if b > a => Some(Sweep { eps_min: a, eps_max: b, steps }),
                Some((a, b)) => {
                    let key = if abs.1 { "eps_max" } else { "eps_over_eps_c_max" };
                    r.fail(key, format!("sweep must be ascending, got [{a}, {b}]"));
                    None
                }
                None => None,
            }
        }
        _ => None,
    };

    let regime = match r.raw("regime") {
        None | Some((_, "auto")) => RegimeChoice::Auto,
        Some((_, "both")) => RegimeChoice::Both,
        Some((_, v)) => match v.parse::<Regime>() {
            Ok(x) => RegimeChoice::One(x),
            Err(m) => {
                r.fail("regime", format!("regime: {m}, auto or both"));
                RegimeChoice::Auto
            }
        },
    };

    let branches = match r.raw("branches") {
        None => (0..=n_max).collect(),
        Some((_, v)) => {
            let parsed: std::result::Result<Vec<usize>, _> = v.split(',').map(|s| s.trim().parse::<usize>()).collect();
            match parsed {
                Ok(b) if !b.is_empty() => b,
                _ => {
                    r.fail("branches", format!("branches: '{v}' is not a comma-separated list of indices"));
                    Vec::new()
                }
            }
        }
    };

    let default_ppw = if command == Dynamics { DEFAULT_DYNAMICS_PPW } else { DEFAULT_PPW };
    let ppw = r.uint("ppw", MIN_PPW as u64).unwrap_or(default_ppw as u64) as usize;
    let base = RunOptions::default();
    let dynamics = RunOptions {
        particles: r.uint("particles", MIN_PARTICLES as u64).unwrap_or(base.particles as u64) as usize,
        t_final: r.float_where("t_final", |x| x > 0.0, "positive").unwrap_or(base.t_final),
        dt: r.float_where("dt", |x| x > 0.0 && x <= MAX_DT, &format!("in (0, {MAX_DT}]")).unwrap_or(base.dt),
        field_refresh_every: r.uint("field_refresh_every", 1).unwrap_or(1) as usize,
        record_every: r.uint("record_every", 1).unwrap_or(base.record_every as u64) as usize,
        kernel_width: r.float_where("kernel_width", |x| x > 0.0, "positive").unwrap_or(DEFAULT_KERNEL_WIDTH),
        ppw,
        seed,
    };
    let checkpoint = r.boolean("checkpoint").unwrap_or(false);

    let reduced = if command == Reduced {
        let theta = r.float_where("theta", |x| x > 0.0, "positive");
        let theta = r.require("theta", theta);
        let d = r.float("d").unwrap_or(0.0);
        if let Some(t) = theta {
            if d.abs() > t {
                r.fail("d", format!("|d| must not exceed theta = {t}, got {d}"));
            }
        }
        let delta = r.float("delta").unwrap_or(0.0);
        let z_start = r.float("z_start").unwrap_or(0.0);
        let z_end = r.float("z_end").unwrap_or(z_start + 10.0);
        if !(z_end > z_start) {
            r.fail("z_end", format!("z_end must exceed z_start = {z_start}, got {z_end}"));
        }
        let samples = r.uint("samples", 1).unwrap_or(200) as usize;
        let trap = r.boolean("trap").unwrap_or(true);
        theta.map(|theta| ReducedOptions { theta, d, delta, z_start, z_end, samples, trap })
    } else {
        None
    };

    let mut errors = r.errors;
    errors.sort_by_key(|e| (e.line.is_none(), e.line));
    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    let params = Params { zeta0: zeta0.expect("checked"), eps: eps.expect("checked"), ell, n_max };
    let raw = entries.into_iter().map(|(k, e)| (k, e.value)).collect();
    Ok(ScenarioConfig { command, params, seed, sweep, regime, branches, ppw, dynamics, checkpoint, reduced, raw })
}

/// Outcome of a scenario run.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
    /// Parts that failed while others succeeded.
    pub failures: Vec<String>,
}

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn params_line(p: &Params) -> String {
    format!(
        "# params zeta0={} eps={} ell={} n_max={}",
        fmt_float(p.zeta0),
        fmt_float(p.eps),
        fmt_float(p.ell),
        p.n_max
    )
}

/// Write a CSV with the schema and params comment lines.
pub fn write_csv(path: &Path, schema: &str, params: &Params, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# fibercryst schema={schema} version={SCHEMA_VERSION}")?;
    writeln!(out, "{}", params_line(params))?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(columns)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

/// Run a parsed scenario, writing CSVs and `manifest.json` into `out`.
pub fn run_scenario(config: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    config.params.validate()?;
    std::fs::create_dir_all(out)?;
    let mut report = RunReport::default();
    let diagnostics = match config.command {
        Threshold => run_threshold(config, out, &mut report)?,
        Branches => run_branches(config, out, &mut report)?,
        Stationary => run_stationary(config, out, &mut report)?,
        Dynamics => run_dynamics(config, out, &mut report)?,
        Reduced => run_reduced(config, out, &mut report)?,
    };
    let p = &config.params;
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = json!({
        "program": "fibercryst",
        "version": env!("CARGO_PKG_VERSION"),
        "schema_version": SCHEMA_VERSION,
        "command": config.command.name(),
        "params": { "zeta0": p.zeta0, "eps": p.eps, "eps_over_eps_c": p.eps / p.eps_c(), "ell": p.ell, "n_max": p.n_max },
        "seed": config.seed,
        "config": config.raw,
        "outputs": report.outputs.iter().map(|o| o.file_name().map(|s| s.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "failures": report.failures,
        "diagnostics": diagnostics,
        "created_unix": created,
    });
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializable") + "\n")?;
    report.manifest = path;
    Ok(report)
}

fn run_threshold(config: &ScenarioConfig, out: &Path, report: &mut RunReport) -> Result<Value> {
    let sweep = config.sweep.expect("threshold scenarios carry a sweep");
    let rows_in = threshold_scan(&config.params, &sweep.values())?;
    let mut first_unstable: BTreeMap<usize, f64> = BTreeMap::new();
    let rows: Vec<Vec<String>> = rows_in
        .iter()
        .map(|r| {
            if r.gamma.is_some() {
                first_unstable.entry(r.n).or_insert(r.eps);
            }
            vec![
                r.n.to_string(),
                fmt_float(r.eps),
                fmt_float(r.eps_over_eps_c),
                r.gamma.map(fmt_float).unwrap_or_default(),
            ]
        })
        .collect();
    let path = out.join("threshold.csv");
    write_csv(&path, "threshold", &config.params, &THRESHOLD_COLUMNS, &rows)?;
    report.outputs.push(path);
    Ok(json!({ "first_unstable_eps": first_unstable }))
}

fn run_branches(config: &ScenarioConfig, out: &Path, report: &mut RunReport) -> Result<Value> {
    let sweep = config.sweep.expect("branch scenarios carry a sweep");
    let p = config.params;
    let jobs: Vec<(Regime, usize)> = config
        .regime
        .regimes(p.zeta0)
        .into_iter()
        .flat_map(|r| (0..=p.n_max).map(move |n| (r, n)))
        .collect();
    let curves: Vec<_> = jobs
        .par_iter()
        .map(|&(regime, n)| trace_branch(p.zeta0, n, (sweep.eps_min, sweep.eps_max), sweep.steps, regime))
        .collect::<Result<_>>()?;
    let mut diag = Vec::new();
    for c in &curves {
        let rows: Vec<Vec<String>> = c
            .points
            .iter()
            .map(|b| {
                vec![
                    b.n.to_string(),
                    fmt_float(b.eps),
                    fmt_float(b.eps / p.eps_c()),
                    fmt_float(b.theta),
                    b.regime.to_string(),
                    u8::from(b.fold).to_string(),
                ]
            })
            .collect();
        let path = out.join(format!("branches_{}_n{}.csv", c.regime, c.n));
        write_csv(&path, "branches", &p, &BRANCH_COLUMNS, &rows)?;
        report.outputs.push(path);
        diag.push(json!({
            "regime": c.regime.to_string(),
            "n": c.n,
            "jump": c.jump.map(|(e, d)| json!({ "eps": e, "delta_theta": d })),
            "nonzero_points": c.points.iter().filter(|b| b.theta > 0.0).count(),
        }));
    }
    Ok(Value::Array(diag))
}

fn run_stationary(config: &ScenarioConfig, out: &Path, report: &mut RunReport) -> Result<Value> {
    let p = config.params;
    let opts = ContinuationOptions { ppw: config.ppw, ..Default::default() };
    let solved: Vec<_> = config.branches.par_iter().map(|&n| (n, solve_branch(&p, n, &opts))).collect();
    let mut diag = Vec::new();
    let mut last_err = None;
    for (n, res) in solved {
        let sol = match res {
            Ok(s) => s.solution,
            Err(e) => {
                report.failures.push(format!("branch {n}: {e}"));
                diag.push(json!({ "n": n, "error": e.to_string() }));
                last_err = Some(e);
                continue;
            }
        };
        let dec = decompose(&sol);
        let (nu, period) = density_diagnostics(&sol, &p)?;
        let (env_pump, env_fiber) = potential_envelopes(&sol, &p);
        let rows: Vec<Vec<String>> = (0..sol.grid.n)
            .map(|j| {
                vec![
                    fmt_float(sol.grid.xi(j)),
                    fmt_float(sol.e[j].re),
                    fmt_float(sol.e[j].im),
                    fmt_float(nu.values[j]),
                    fmt_float(dec.theta_local[j]),
                    fmt_float(dec.n_plus[j]),
                    fmt_float(dec.n_minus[j]),
                    fmt_float(env_pump[j]),
                    fmt_float(env_fiber[j]),
                ]
            })
            .collect();
        let path = out.join(format!("stationary_n{n}.csv"));
        write_csv(&path, "stationary", &p, &STATIONARY_COLUMNS, &rows)?;
        report.outputs.push(path);
        let op = order_parameter(&dec);
        let dips = fraction_dips(&dec, 0.1);
        diag.push(json!({
            "n": n,
            "theta": op.theta,
            "theta_max_deviation": op.max_deviation,
            "modulation_period": period,
            "nplus_dips": dips.0,
            "nminus_dips": dips.1,
            "fraction_minimum": fraction_minimum(&dec, 0.5 * p.ell),
            "residual": sol.residual,
            "radiation_mismatch": sol.radiation_mismatch(),
        }));
    }
    if report.outputs.is_empty() {
        if let Some(e) = last_err {
            return Err(e);
        }
    }
    Ok(Value::Array(diag))
}

fn run_dynamics(config: &ScenarioConfig, out: &Path, report: &mut RunReport) -> Result<Value> {
    let p = config.params;
    let opts = RunOptions { seed: config.seed, ..config.dynamics };
    let (ts, ens) = run_with(&p, &opts)?;
    let rows: Vec<Vec<String>> = (0..ts.t.len())
        .map(|k| {
            vec![
                fmt_float(ts.t[k]),
                fmt_float(ts.theta[k]),
                fmt_float(ts.bunching[k]),
                fmt_float(ts.energy[k]),
                ts.escaped[k].to_string(),
            ]
        })
        .collect();
    let path = out.join("dynamics.csv");
    write_csv(&path, "dynamics", &p, &DYNAMICS_COLUMNS, &rows)?;
    report.outputs.push(path);
    if config.checkpoint {
        let path = out.join("dynamics_final.bin");
        write_checkpoint(&ens, &path)?;
        report.outputs.push(path);
    }
    Ok(json!({
        "particles_final": ens.len(),
        "theta_final": ts.theta.last(),
        "bunching_final": ts.bunching.last(),
        "escaped": ts.escaped.last(),
    }))
}

fn run_reduced(config: &ScenarioConfig, out: &Path, report: &mut RunReport) -> Result<Value> {
    let p = config.params;
    let o = config.reduced.expect("reduced scenarios carry their options");
    let coupling = if o.trap { FieldCoupling::from_params(&p) } else { FieldCoupling::autonomous(p.zeta0, p.eps) };
    let g = ThermalG::for_trap(p.ell);
    let s0 = ReducedState { theta: o.theta, d: o.d, delta: o.delta };
    let samples = integrate_reduced(&s0, (o.z_start, o.z_end), o.samples, &coupling, &g)?;
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            vec![
                fmt_float(s.z),
                fmt_float(s.state.theta),
                fmt_float(s.state.d),
                fmt_float(s.state.delta),
                fmt_float(s.hbar),
            ]
        })
        .collect();
    let path = out.join("reduced.csv");
    write_csv(&path, "reduced", &p, &REDUCED_COLUMNS, &rows)?;
    report.outputs.push(path);
    let h: Vec<f64> = samples.iter().map(|s| s.hbar).collect();
    let drift = h.iter().map(|x| (x - h[0]).abs()).fold(0.0, f64::max);
    Ok(json!({ "hbar_max_drift": drift }))
}

/// Exit status for a failed run: 2 for bad input, 3 for numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        2
    } else {
        3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_with_pi() {
        assert_eq!(parse_number("2.5").unwrap(), 2.5);
        assert!((parse_number("150/pi").unwrap() - 150.0 / std::f64::consts::PI).abs() < 1e-12);
        assert!((parse_number("2 * pi / 4").unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("abc").is_err());
        assert!(parse_number("2*").is_err());
    }

    #[test]
    fn minimal_threshold_config_gets_defaults() {
        let c = parse_config("command = threshold\nzeta0 = 0.5\neps_min = 0\neps_max = 2\n").unwrap();
        assert_eq!(c.command, Threshold);
        assert_eq!(c.params.ell, 100.0);
        assert_eq!(c.params.n_max, 3);
        assert_eq!(c.seed, 1);
        assert_eq!(c.sweep.unwrap().steps, 101);
    }

    #[test]
    fn negative_zeta0_names_line() {
        let e = parse_config("command = threshold\n# comment\nzeta0 = -1\neps_min=0\neps_max=1\n").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].line, Some(3));
        assert!(e.0[0].message.contains("zeta0"));
    }

    #[test]
    fn all_errors_are_reported() {
        let text = "command = stationary\nfoo = 1\nzeta0 = x\nppw = 3\nparticles = 5000\n";
        let e = parse_config(text).unwrap_err();
        let lines: Vec<Option<usize>> = e.0.iter().map(|x| x.line).collect();
        assert!(lines.contains(&Some(2)), "{e}");
        assert!(lines.contains(&Some(3)), "{e}");
        assert!(lines.contains(&Some(4)), "{e}");
        assert!(lines.contains(&Some(5)), "{e}");
        assert!(e.0.iter().any(|x| x.message.contains("'eps'")), "{e}");
    }

    #[test]
    fn command_from_argument() {
        let c = parse_config_with("zeta0 = 1\neps_over_eps_c = 2\n", Some(Dynamics)).unwrap();
        assert_eq!(c.command, Dynamics);
        assert!((c.params.eps - 1.0).abs() < 1e-15);
        assert!(parse_config_with("command = reduced\nzeta0 = 1\neps = 1\ntheta = 1\n", Some(Dynamics)).is_err());
        assert!(parse_config("zeta0 = 1\n").is_err());
    }

    #[test]
    fn sweep_in_units_of_threshold() {
        let c = parse_config("command = branches\nzeta0 = 0.05\neps_over_eps_c_min = 0.5\neps_over_eps_c_max = 9\n").unwrap();
        let s = c.sweep.unwrap();
        assert!((s.eps_min - 5.0).abs() < 1e-12 && (s.eps_max - 90.0).abs() < 1e-12);
        assert_eq!(c.regime.regimes(0.05), vec![Regime::Weak]);
        assert_eq!(c.regime.regimes(3.0), vec![Regime::Weak, Regime::Strong]);
        assert!(parse_config("command = branches\nzeta0 = 1\neps_min = 2\neps_max = 1\n").is_err());
        assert!(parse_config("command = branches\nzeta0 = 1\neps_min = 0\neps_over_eps_c_max = 1\n").is_err());
    }

    #[test]
    fn duplicate_and_misplaced_keys() {
        let e = parse_config("command = threshold\nzeta0 = 1\nzeta0 = 2\neps_min=0\neps_max=1\ntheta = 1\n").unwrap_err();
        assert_eq!(e.0.len(), 2);
        assert_eq!(e.0[0].line, Some(3));
        assert_eq!(e.0[1].line, Some(6));
        let e = parse_config("command = threshold\nfoo = 1\nzeta0 = 0\n").unwrap_err();
        let lines: Vec<_> = e.0.iter().map(|x| x.line).collect();
        assert_eq!(lines, vec![Some(2), Some(3), None]);
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
    }
}
