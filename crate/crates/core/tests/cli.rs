use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn autoion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autoion")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
[field]
intensity_w_cm2 = [1e13, 1e14]
bandwidth_au = 0.0018
duration_fs = 10

[scan]
delta_min_au = -0.004
delta_max_au = 0.004
points = 9

[solver]
solver = ["laplace", "decorrelated"]
n_traj = 20
dt_au = 1.0

[output]
name = "small"
"#;

#[test]
fn scan_writes_profile_and_metrics() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = autoion(&[
        "scan",
        "--config",
        &cfg,
        "--solver",
        "laplace",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("small.csv")).unwrap();
    assert!(csv.contains("# solver = laplace"));
    assert_eq!(csv.matches("# curve ").count(), 2);
    let rows = csv.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count();
    assert_eq!(rows, 2 * 9);
    assert!(out.join("small.metrics.csv").exists());
}

#[test]
fn scan_with_two_solvers_needs_an_explicit_choice() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(code(&autoion(&["scan", "--config", &cfg])), 2);
}

#[test]
fn bad_configs_exit_with_config_code() {
    let dir = TempDir::new().unwrap();
    for body in [
        SMALL.replace("points = 9", "points = 0"),
        SMALL.replace("duration_fs = 10", "duration_fs = -1"),
        SMALL.replace("[scan]", "[scan]\nbogus = 1"),
        "[field\n".to_string(),
    ] {
        let cfg = write_config(dir.path(), &body);
        let o = autoion(&["scan", "--config", &cfg, "--solver", "laplace"]);
        assert_eq!(code(&o), 2, "{body}");
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(code(&autoion(&["scan", "--config", "/does/not/exist.toml"])), 2);
    assert_eq!(code(&autoion(&["no-such-command"])), 2);
}

#[test]
fn laplace_rejects_gaussian_pulses_numerically() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("[field]", "[field]\npulse = \"gaussian\""));
    let out = dir.path().join("out");
    let o = autoion(&[
        "scan",
        "--config",
        &cfg,
        "--solver",
        "laplace",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn double_ionization_adds_a_column() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = autoion(&[
        "scan",
        "--config",
        &cfg,
        "--solver",
        "decorrelated",
        "--double-ionization",
        "on",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("small.csv")).unwrap();
    assert!(csv.contains("p_ion_corrected"));
}

#[test]
fn compare_solvers_reports_deviations() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = autoion(&["compare-solvers", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dev = fs::read_to_string(out.join("small.deviation.csv")).unwrap();
    let rows: Vec<&str> = dev
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("curve"))
        .collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let max_abs: f64 = r.split(',').nth(3).unwrap().trim().parse().unwrap();
        assert!(max_abs < 1e-7, "{r}");
    }
    assert!(out.join("small.compare.csv").exists());

    let single = write_config(dir.path(), &SMALL.replace(r#"["laplace", "decorrelated"]"#, r#""laplace""#));
    assert_eq!(code(&autoion(&["compare-solvers", "--config", &single])), 2);
}

#[test]
fn trajectory_dump_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut dumps = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = autoion(&[
            "trajectory-dump",
            "--config",
            &cfg,
            "--delta",
            "-0.001",
            "--index",
            "3",
            "--curve",
            "1",
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        dumps.push(fs::read(out.join("small_trajectory_c1_i3.csv")).unwrap());
    }
    assert_eq!(dumps[0], dumps[1]);
    let text = String::from_utf8(dumps.pop().unwrap()).unwrap();
    assert!(text.lines().any(|l| l.starts_with("t_au")));
    let o = autoion(&["trajectory-dump", "--config", &cfg, "--delta", "0", "--curve", "9"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn monte_carlo_scans_depend_on_the_seed_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = autoion(&[
            "scan",
            "--config",
            &cfg,
            "--solver",
            "mc",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        fs::read(out.join("small.csv")).unwrap()
    };
    let a = run("11", "a");
    assert_eq!(a, run("11", "b"));
    assert_ne!(a, run("12", "c"));
}

#[test]
fn validate_passes_by_default() {
    let dir = TempDir::new().unwrap();
    let o = autoion(&["validate", "--out", dir.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
    assert!(dir.path().join("validation.txt").exists());
}

#[test]
fn validate_detects_a_conjugated_kernel() {
    let o = autoion(&["validate", "--n-traj", "50", "--inject-kappa-error"]);
    assert_eq!(code(&o), 4);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL check=laplace_vs_decorrelated"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("laplace_vs_decorrelated"));
}

#[test]
fn small_ensembles_widen_the_bands() {
    let o = autoion(&["validate", "--n-traj", "10"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("# warning: n_traj = 10"));
    assert_eq!(code(&o), 0, "{stdout}");
}
