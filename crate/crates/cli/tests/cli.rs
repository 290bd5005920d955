use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ultrawalk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ultrawalk")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Data rows of a CSV as floats, keyed by the header.
fn csv_columns(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let (header, rows) = csv_columns(text);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn trailer(text: &str, key: &str) -> Option<String> {
    text.lines().find_map(|l| l.strip_prefix(&format!("# {key}=")).map(str::to_owned))
}

#[test]
fn byte_identical_reruns() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"seed": 11, "grids": {"walks": 5000, "steps": [1, 3, 9]}}"#).unwrap();
    for cmd in ["walk", "return", "heat", "profile"] {
        let a = ultrawalk(&[cmd, "--config", "run.json", "--no-timestamp"], dir.path());
        let b = ultrawalk(&[cmd, "--config", "run.json", "--no-timestamp"], dir.path());
        assert!(a.status.success(), "{cmd}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{cmd} output differs between runs");
    }
}

#[test]
fn header_carries_hash_and_seed() {
    let dir = TempDir::new().unwrap();
    let out = ultrawalk(&["spectrum", "--seed", "42"], dir.path());
    let text = stdout(&out);
    assert!(text.starts_with("level,lambda,n,n_left\n"));
    assert_eq!(trailer(&text, "seed").as_deref(), Some("42"));
    assert_eq!(trailer(&text, "config_hash").unwrap().len(), 64);
    assert!(trailer(&text, "generated_unix").is_some());
    let quiet = stdout(&ultrawalk(&["spectrum", "--seed", "42", "--no-timestamp"], dir.path()));
    assert!(trailer(&quiet, "generated_unix").is_none());
}

#[test]
fn seed_changes_walk_output() {
    let dir = TempDir::new().unwrap();
    let a = ultrawalk(&["walk", "--seed", "1", "--no-timestamp"], dir.path());
    let b = ultrawalk(&["walk", "--seed", "2", "--no-timestamp"], dir.path());
    assert_ne!(column(&stdout(&a), "empirical"), column(&stdout(&b), "empirical"));
}

#[test]
fn malformed_q_is_config_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"coefficients": {"family": "geometric", "q": 1.5}}"#).unwrap();
    let out = ultrawalk(&["spectrum", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q ∈ (0,1) required"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_field_and_missing_file_are_config_errors() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("typo.json"), r#"{"towr": {"kind": "factorial"}}"#).unwrap();
    assert_eq!(ultrawalk(&["spectrum", "--config", "typo.json"], dir.path()).status.code(), Some(2));
    assert_eq!(ultrawalk(&["spectrum", "--config", "absent.json"], dir.path()).status.code(), Some(2));
    assert_eq!(ultrawalk(&["return", "--tol", "2"], dir.path()).status.code(), Some(2));
}

#[test]
fn level_cap_is_inconclusive() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("poly.json"), r#"{"coefficients": {"family": "polynomial", "p": 2.0}}"#).unwrap();
    let out = ultrawalk(&["return", "--config", "poly.json", "--max-level", "3"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn return_slope_on_geometric_z2() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("g.json"), r#"{"grids": {"t": {"lo": 10, "hi": 1e6, "points": 41}}}"#).unwrap();
    let out = ultrawalk(&["return", "--config", "g.json", "--no-timestamp"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    let t = column(&text, "t");
    let p = column(&text, "p");
    assert_eq!(t.len(), 41);
    assert!(p.windows(2).all(|w| w[1] < w[0]), "p is not decreasing");
    let x: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope + 1.0).abs() <= 0.03, "slope {slope}");
    let reported: f64 = trailer(&text, "loglog_slope").unwrap().parse().unwrap();
    assert!((reported - slope).abs() < 1e-9);
}

#[test]
fn validate_is_all_green() {
    let dir = TempDir::new().unwrap();
    let out = ultrawalk(&["validate", "--no-timestamp"], dir.path());
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    let (header, rows) = csv_columns(&text);
    let status = header.iter().position(|h| h == "status").unwrap();
    assert!(rows.len() >= 10);
    assert!(rows.iter().all(|r| r[status] == "PASS"), "{text}");
    assert_eq!(trailer(&text, "all_pass").as_deref(), Some("true"));
}

#[test]
fn json_mirrors_csv() {
    let dir = TempDir::new().unwrap();
    let csv = stdout(&ultrawalk(&["spectrum", "--no-timestamp"], dir.path()));
    let json = stdout(&ultrawalk(&["spectrum", "--no-timestamp", "--format", "json"], dir.path()));
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    let lambda = column(&csv, "lambda");
    assert_eq!(rows.len(), lambda.len());
    for (row, l) in rows.iter().zip(&lambda) {
        assert_eq!(row["lambda"].as_f64().unwrap(), *l);
    }
    assert_eq!(doc["config_hash"].as_str(), trailer(&csv, "config_hash").as_deref());
}

#[test]
fn config_round_trips_through_cli() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("s.json"),
        r#"{"tower": {"kind": "factorial"}, "coefficients": {"family": "factorial_power", "gamma": 1.0, "shift": 2}, "seed": 5}"#,
    )
    .unwrap();
    let first = ultrawalk(&["config", "--config", "s.json"], dir.path());
    assert!(first.status.success());
    fs::write(dir.path().join("again.json"), &first.stdout).unwrap();
    let second = ultrawalk(&["config", "--config", "again.json"], dir.path());
    assert_eq!(first.stdout, second.stdout);
    let a = stdout(&ultrawalk(&["spectrum", "--config", "s.json", "--no-timestamp"], dir.path()));
    let b = stdout(&ultrawalk(&["spectrum", "--config", "again.json", "--no-timestamp"], dir.path()));
    assert_eq!(a, b);
}

#[test]
fn designed_file_feeds_back_as_coefficients() {
    let dir = TempDir::new().unwrap();
    let out = ultrawalk(&["design", "--out", "designed.json", "--no-timestamp"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ratios = column(&stdout(&out), "ratio");
    assert!(ratios.windows(2).all(|w| w[1] > w[0]));
    fs::write(dir.path().join("use.json"), r#"{"coefficients": {"file": "designed.json"}}"#).unwrap();
    let ret = ultrawalk(&["return", "--config", "use.json", "--no-timestamp"], dir.path());
    assert!(ret.status.success(), "{}", String::from_utf8_lossy(&ret.stderr));
}

#[test]
fn slow_design_decreases() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("slow.json"),
        r#"{"grids": {"design": {"mode": "slow", "target": {"target": "power", "beta": 0.5}}}}"#,
    )
    .unwrap();
    let out = ultrawalk(&["design", "--config", "slow.json", "--no-timestamp"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ratios = column(&stdout(&out), "ratio");
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn recurrence_reports_verdict_with_terms() {
    let dir = TempDir::new().unwrap();
    for (q, verdict) in [(0.3, "Recurrent"), (0.8, "Transient")] {
        fs::write(dir.path().join("r.json"), format!(r#"{{"coefficients": {{"family": "geometric", "q": {q}}}}}"#))
            .unwrap();
        let out = ultrawalk(&["recurrence", "--config", "r.json", "--no-timestamp"], dir.path());
        let text = stdout(&out);
        assert!(out.status.success());
        assert_eq!(trailer(&text, "verdict").as_deref(), Some(verdict));
        assert!(trailer(&text, "reason").is_some());
        assert!(!column(&text, "tail_term").is_empty());
    }
}

#[test]
fn heat_band_holds_on_default_grid() {
    let dir = TempDir::new().unwrap();
    let text = stdout(&ultrawalk(&["heat", "--no-timestamp"], dir.path()));
    assert_eq!(trailer(&text, "band_violations").as_deref(), Some("0"));
}

#[test]
fn transform_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let text = stdout(&ultrawalk(&["transform", "--no-timestamp"], dir.path()));
    let x = column(&text, "x");
    let l = column(&text, "legendre");
    for (x, l) in x.iter().zip(&l) {
        assert!((l / (2.0 * x.sqrt()) - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn walk_summaries_agree_with_exact_law() {
    let dir = TempDir::new().unwrap();
    let text = stdout(&ultrawalk(&["walk", "--seed", "3", "--no-timestamp"], dir.path()));
    let z = column(&text, "z");
    assert!(z.iter().all(|z| z.abs() <= 4.5), "{z:?}");
}
