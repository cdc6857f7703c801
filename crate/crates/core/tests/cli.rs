use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fibercryst::cli::{
    BRANCH_COLUMNS, DYNAMICS_COLUMNS, REDUCED_COLUMNS, SCHEMA_VERSION, STATIONARY_COLUMNS, THRESHOLD_COLUMNS,
};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(command: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = out.with_extension("cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fibercryst"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env("FIBERCRYST_THREADS", "1")
        .output()
        .unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// Schema line, params line, column header, then rows.
fn check_header(text: &str, schema: &str, columns: &[&str]) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("# fibercryst schema={schema} version={SCHEMA_VERSION}"));
    assert!(lines.next().unwrap().starts_with("# params zeta0="));
    assert_eq!(lines.next().unwrap(), columns.join(","));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const THRESHOLD: &str = "# golden threshold scan\nzeta0 = 0.5\neps_min = 0.5\neps_max = 1.5\neps_steps = 11\nn_max = 1\n";

#[test]
fn threshold_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = run("threshold", THRESHOLD, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out.join("threshold.csv"));
    assert_eq!(text, read(&golden("threshold.csv")));
    let rows = check_header(&text, "threshold", &THRESHOLD_COLUMNS);
    // ε_c = 1: γ appears within one sweep step above ε = 1, for n = 0 only
    let first = rows.iter().find(|r| r[0] == "0" && !r[3].is_empty()).unwrap();
    let e: f64 = first[1].parse().unwrap();
    assert!(e > 1.0 && e < 1.1 + 1e-12, "{e}");
    assert!(rows.iter().filter(|r| r[0] == "1").all(|r| r[3].is_empty()));
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "threshold");
    assert_eq!(manifest["params"]["zeta0"], 0.5);
    assert_eq!(manifest["outputs"][0], "threshold.csv");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "zeta0 = 0.05\neps_over_eps_c = 0.5\nparticles = 1000\nt_final = 2\nppw = 24\nkernel_width = pi/8\n";
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("dynamics", cfg, &a, &["--seed", "4"]).status.success());
    assert!(run("dynamics", cfg, &b, &["--seed", "4"]).status.success());
    assert_eq!(read(&a.join("dynamics.csv")), read(&b.join("dynamics.csv")));
    let c = dir.path().join("c");
    assert!(run("dynamics", cfg, &c, &["--seed", "5"]).status.success());
    assert_ne!(read(&a.join("dynamics.csv")), read(&c.join("dynamics.csv")));
    let m: serde_json::Value = serde_json::from_str(&read(&a.join("manifest.json"))).unwrap();
    assert_eq!(m["seed"], 4);
}

#[test]
fn dynamics_below_threshold_has_flat_bunching() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let cfg = "zeta0 = 0.05\neps_over_eps_c = 0.5\nparticles = 2000\nt_final = 20\nrecord_every = 50\ncheckpoint = true\n";
    let o = run("dynamics", cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = check_header(&read(&out.join("dynamics.csv")), "dynamics", &DYNAMICS_COLUMNS);
    let floor = 1.0 / (2000f64).sqrt();
    for r in &rows {
        let b: f64 = r[2].parse().unwrap();
        assert!(b < 4.0 * floor, "bunching {b}");
    }
    let ens = fibercryst::dynamics::read_checkpoint(&out.join("dynamics_final.bin")).unwrap();
    assert_eq!(ens.seed, 1);
    assert_eq!(ens.len() + rows.last().unwrap()[4].parse::<usize>().unwrap(), 2000);
}

#[test]
fn branches_write_one_file_per_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let cfg = "zeta0 = 0.05\neps_over_eps_c_min = 0.5\neps_over_eps_c_max = 9\neps_steps = 35\n";
    let o = run("branches", cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for n in 0..4 {
        let rows = check_header(&read(&out.join(format!("branches_weak_n{n}.csv"))), "branches", &BRANCH_COLUMNS);
        assert_eq!(rows.len(), 35);
        // ordered points only above the onset of branch n
        for r in &rows {
            let ratio: f64 = r[2].parse().unwrap();
            let theta: f64 = r[3].parse().unwrap();
            assert_eq!(theta > 0.0, ratio > (1 + 2 * n) as f64, "n={n} ratio={ratio}");
            assert_eq!(r[4], "weak");
        }
    }
}

#[test]
fn stationary_and_reduced_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = run("stationary", "zeta0 = 0.05\neps_over_eps_c = 1.5\nbranches = 0\nell = 40\n", &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = check_header(&read(&out.join("stationary_n0.csv")), "stationary", &STATIONARY_COLUMNS);
    assert!(rows.len() > 1000);
    assert!(rows.iter().all(|r| r.len() == STATIONARY_COLUMNS.len()));

    let out = dir.path().join("r");
    let o = run("reduced", "zeta0 = 1\neps = 1\ntheta = 1\nd = 0.3\nz_end = 4\nsamples = 8\ntrap = false\n", &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = check_header(&read(&out.join("reduced.csv")), "reduced", &REDUCED_COLUMNS);
    assert_eq!(rows.len(), 9);
    let h0: f64 = rows[0][4].parse().unwrap();
    for r in &rows {
        assert_eq!(r[1].parse::<f64>().unwrap(), 1.0);
        assert!((r[4].parse::<f64>().unwrap() - h0).abs() < 1e-8);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("threshold", "zeta0 = -1\nbogus = 3\n", &dir.path().join("x"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 1") && err.contains("line 2"), "{err}");

    let o = run("threshold", "zeta0 = 1\neps_min = 0\neps_max = 1\n", &dir.path().join("y"), &[]);
    assert_eq!(o.status.code(), Some(0));

    let o = Command::new(env!("CARGO_BIN_EXE_fibercryst"))
        .args(["threshold", "--config", "/nonexistent/cfg"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = run("threshold", "zeta0 = 1\neps_min = 0\neps_max = 1\n", &dir.path().join("z"), &[]);
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_fibercryst"))
        .args(["threshold", "--config"])
        .arg(dir.path().join("z.cfg"))
        .arg("--out")
        .arg(dir.path().join("z2"))
        .env("FIBERCRYST_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    // strong-pump branch 2 in a short trap does not converge
    let cfg = "zeta0 = 150/pi\neps_over_eps_c = 9.5\nbranches = 2\nell = 50\n";
    let o = run("stationary", cfg, &dir.path().join("w"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
