use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const CONCENTRIC: &str = "\
body.kind = ball
body.radius = 1
inclusion.kind = ball
inclusion.radius = 0.6
shell.r1 = 1.05
shell.r2 = 1.55
solver.cells = 2000
";

fn enclab(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.conf");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_enclab"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap_or_else(|| panic!("no {key} in {text}"));
    line.split('=').nth(1).unwrap().trim().parse().unwrap()
}

#[test]
fn extract_recovers_concentric_radius() {
    let dir = tempfile::tempdir().unwrap();
    let o = enclab(dir.path(), CONCENTRIC, &["extract"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert!((value(&summary, "r_d_hat") - 0.6).abs() < 0.025, "{summary}");
    assert!(summary.contains("class = A.II"));
    assert_eq!(stdout(&o).lines().next(), summary.lines().next());
}

#[test]
fn negative_contrast_flips_the_class() {
    let dir = tempfile::tempdir().unwrap();
    let o = enclab(dir.path(), &format!("{CONCENTRIC}inclusion.h = -0.5\n"), &["extract"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("class = A.I\n"));
}

#[test]
fn oracles_report_no_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = enclab(dir.path(), &format!("{CONCENTRIC}oracles.cases = 20\n"), &["oracles"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("out/oracles.txt")).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{report}");
    assert!(report.ends_with("failures = 0\n"));
}

#[test]
fn indicator_output_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = enclab(d.path(), CONCENTRIC, &["indicator"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("out/indicator.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let csv = String::from_utf8(read(&a)).unwrap();
    assert!(csv.starts_with("tau,sqrt_tau,indicator,log_abs_indicator,path\n"));
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn tau_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = enclab(dir.path(), CONCENTRIC, &["indicator", "--tau-min", "100", "--tau-max", "400", "--tau-count", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = fs::read_to_string(dir.path().join("out/effective_config.txt")).unwrap();
    assert!(echo.contains("tau.min = 100\n") && echo.contains("tau.count = 5\n"), "{echo}");
    let csv = fs::read_to_string(dir.path().join("out/indicator.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn invalid_config_lists_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = "body.kind = ball\nshell.r1 = 0.5\nshell.r2 = 0.4\nbogus = 1\ntau.count = x\n";
    let o = enclab(dir.path(), text, &["extract"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["unknown key bogus", "missing required key inclusion.radius", "out of order", "tau.count"] {
        assert!(err.contains(needle), "{needle} not in {err}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn duplicate_key_names_both_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = enclab(dir.path(), &format!("{CONCENTRIC}shell.r1 = 1.1\n"), &["extract"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 8: duplicate key shell.r1 (first set on line 5)"), "{}", stderr(&o));
}

#[test]
fn unreadable_config_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_enclab")).args(["extract", "--config", "/no/such/file.conf"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn underflowing_sweep_exits_with_noise_floor() {
    let dir = tempfile::tempdir().unwrap();
    let o = enclab(dir.path(), CONCENTRIC, &["extract", "--tau-min", "1e7", "--tau-max", "1e8"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    assert!(manifest.contains("status = partial\nfailed_stage = extract\n"), "{manifest}");
}

#[test]
fn manifest_digests_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = enclab(dir.path(), CONCENTRIC, &["thermo"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("command = thermo\nstatus = complete\n"));
    let mut n = 0;
    for line in manifest.lines().skip(2) {
        let (digest, name) = line.split_once("  ").unwrap();
        assert_eq!(hex::encode(Sha256::digest(fs::read(out.join(name)).unwrap())), digest, "{name}");
        n += 1;
    }
    assert_eq!(n, 4);
}

#[test]
fn thermo_rate_matches_target() {
    let dir = tempfile::tempdir().unwrap();
    let o = enclab(dir.path(), CONCENTRIC, &["thermo"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = fs::read_to_string(dir.path().join("out/thermo_summary.txt")).unwrap();
    assert!(value(&s, "relative_error") < 0.02, "{s}");
}

#[test]
fn time_domain_path_agrees_in_class() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{CONCENTRIC}path = timedomain\ntime.t_end = 1.0\ntime.steps = 4000\ntau.min = 16\ntau.max = 100\n");
    let o = enclab(dir.path(), &text, &["extract"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("class = A.II"), "{}", stdout(&o));
}
