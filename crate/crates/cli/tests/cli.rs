use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ssa(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ssa"));
    cmd.args(args).env_remove("SSA_SEED").env_remove("SSA_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

const WCM: &str = r#"{"model": "wcm", "wcm": {"weights": [1, 1, 2], "gamma": 1},
    "run": {"samples": 100, "burn_in": 10, "replications": 500, "seed": 5}}"#;

#[test]
fn wcm_run_matches_enumeration() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "wcm.json", WCM);
    let v = json(&ssa(&["run", "--config", s(&cfg)], &[]));
    let est = v["estimate"].as_f64().unwrap();
    let re = v["re"].as_f64().unwrap();
    assert!((est - 0.375).abs() <= 4.0 * re * est, "{est} (RE {re})");
    assert_eq!(v["per_run"].as_array().unwrap().len(), 500);
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["estimate", "re", "per_run", "levels", "seed", "wall_time"] {
        assert!(keys.contains(&k), "missing {k}");
    }
    assert_eq!(v["levels"], serde_json::json!([4.0, 3.0, 2.0, 1.0]));
}

fn without_wall_time(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time");
    v
}

#[test]
fn fixed_seed_is_reproducible_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "wcm.json", WCM);
    let a = json(&ssa(&["run", "--config", s(&cfg), "--seed", "9", "--reps", "20"], &[]));
    let b = json(&ssa(&["run", "--config", s(&cfg), "--seed", "9", "--reps", "20", "--threads", "3"], &[]));
    let c = json(&ssa(&["run", "--config", s(&cfg), "--reps", "20"], &[("SSA_SEED", "9"), ("SSA_THREADS", "1")]));
    assert_eq!(without_wall_time(a.clone()), without_wall_time(b));
    assert_eq!(without_wall_time(a.clone()), without_wall_time(c));
    let d = json(&ssa(&["run", "--config", s(&cfg), "--seed", "10", "--reps", "20"], &[]));
    assert_ne!(a["per_run"], d["per_run"]);
}

#[test]
fn flag_beats_environment_beats_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "wcm.json", WCM);
    let base = ["run", "--config", s(&cfg), "--reps", "2"];
    assert_eq!(json(&ssa(&base, &[]))["seed"], 5);
    assert_eq!(json(&ssa(&base, &[("SSA_SEED", "6")]))["seed"], 6);
    let mut flagged = base.to_vec();
    flagged.extend(["--seed", "7"]);
    assert_eq!(json(&ssa(&flagged, &[("SSA_SEED", "6")]))["seed"], 7);
    assert_eq!(ssa(&base, &[("SSA_SEED", "abc")]).status.code(), Some(2));
}

#[test]
fn strata_csv_has_the_documented_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "wcm.json", WCM);
    let csv = dir.path().join("strata.csv");
    let out = dir.path().join("summary.json");
    let o = ssa(&["run", "--config", s(&cfg), "--reps", "5", "--csv", s(&csv), "--out", s(&out)], &[]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,gamma,size_X,size_Z,R_hat,P_hat,H_hat,C_hat"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        for field in row {
            let ok = field == "-inf" || field.parse::<f64>().is_ok_and(f64::is_finite);
            assert!(ok, "{field}");
        }
    }
    assert_eq!(rows[3][1], "-inf");
    let c_sum: f64 = rows.iter().map(|r| r[7].parse::<f64>().unwrap()).sum();
    assert!((c_sum - summary["estimate"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn pilot_schedule_feeds_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "credit.json",
        r#"{"model": "credit", "credit": {"portfolio": {"generator": {"k": 10, "d": 2, "seed": 1}}, "vars": [5, 10]},
            "run": {"samples": 200, "burn_in": 5, "replications": 2, "rho": 0.2, "seed": 1}}"#,
    );
    let levels = dir.path().join("levels.json");
    let o = ssa(&["pilot", "--config", s(&cfg), "--out", s(&levels)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let schedule: Value = serde_json::from_str(&std::fs::read_to_string(&levels).unwrap()).unwrap();
    let thresholds: Vec<f64> = schedule["levels"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(thresholds.contains(&5.0) && thresholds.contains(&10.0));

    let v = json(&ssa(&["run", "--config", s(&cfg), "--levels", s(&levels)], &[]));
    assert_eq!(v["levels"], schedule["levels"]);
    let names: Vec<&str> = v["quantities"].as_array().unwrap().iter().map(|q| q["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["cvar", "cvar", "tail", "tail"]);
    assert!(v["estimate"].as_f64().unwrap() >= 5.0);
}

#[test]
fn unreachable_loss_level_is_degenerate() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "credit.json",
        r#"{"model": "credit", "credit": {"portfolio": {"generator": {"k": 5, "d": 1, "seed": 1}}, "vars": [1000]},
            "run": {"samples": 50, "burn_in": 2, "replications": 2}}"#,
    );
    let o = ssa(&["run", "--config", s(&cfg)], &[]);
    assert_eq!(o.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["estimate"].is_null());
}

#[test]
fn saw_series_reports_error_against_enumeration() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "saw.json",
        r#"{"model": "saw", "saw": {"n": 10, "re_target": 0.03},
            "run": {"samples": 1000, "burn_in": 1, "replications": 10, "seed": 2}}"#,
    );
    let csv = dir.path().join("series.csv");
    let v = json(&ssa(&["run", "--config", s(&cfg), "--csv", s(&csv)], &[]));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,c_hat,re,pe_vs_oracle,mu_hat,delta_hat");
    let row: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(row[0], 10.0);
    assert!(row[2] <= 0.03);
    assert!(row[3].abs() <= 3.0 * row[2] * 100.0, "PE {}", row[3]);
    assert!((row[1] - v["estimate"].as_f64().unwrap()).abs() < 1e-9 * row[1]);
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    for (i, text) in [
        r#"{"model": "wcm", "wcm": {"weights": [1, 2], "gamma": 1}, "unknown": true}"#,
        r#"{"model": "wcm", "wcm": {"weights": [], "gamma": 1}}"#,
        r#"{"model": "wcm"}"#,
        r#"{"model": "saw", "saw": {"n": 5}, "run": {"samples": 0}}"#,
        r#"not json"#,
    ]
    .iter()
    .enumerate()
    {
        let cfg = write(&dir, &format!("bad{i}.json"), text);
        assert_eq!(ssa(&["run", "--config", s(&cfg)], &[]).status.code(), Some(2), "{text}");
    }
    assert_eq!(ssa(&["run", "--config", "/nonexistent.json"], &[]).status.code(), Some(2));
}

#[test]
fn oracle_walk_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "saw.json", r#"{"model": "saw", "saw": {"n": 10}}"#);
    let o = ssa(&["oracle", "--config", s(&cfg)], &[]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("quantity,at,value,standard_error,method,work\n"));
    assert!(text.contains("count,10,44100,0,dfs,"), "{text}");
    let sym = stdout(&ssa(&["oracle", "--config", s(&cfg), "--symmetric"], &[]));
    assert!(sym.contains("count,10,44100,0,dfs,"));
}

#[test]
fn oracle_refusals_exit_4() {
    let dir = TempDir::new().unwrap();
    let weights = vec!["1"; 25].join(",");
    let cfg = write(&dir, "big.json", &format!(r#"{{"model": "wcm", "wcm": {{"weights": [{weights}], "gamma": 3}}}}"#));
    assert_eq!(ssa(&["oracle", "--config", s(&cfg)], &[]).status.code(), Some(4));
    let cfg = write(
        &dir,
        "rare.json",
        r#"{"model": "credit", "credit": {"portfolio": {"generator": {"k": 10, "d": 1, "seed": 1}}, "vars": [40], "oracle_samples": 10000}}"#,
    );
    assert_eq!(ssa(&["oracle", "--config", s(&cfg)], &[]).status.code(), Some(4));
}

#[test]
fn oracle_credit_zero_level_is_certain() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "credit.json",
        r#"{"model": "credit", "credit": {"portfolio": {"generator": {"k": 10, "d": 1, "seed": 1}}, "vars": [0], "oracle_samples": 20000}}"#,
    );
    let o = ssa(&["oracle", "--config", s(&cfg)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("\ntail,0,1,0,plain_mc,20000\n"), "{}", stdout(&o));
}

#[test]
fn bounds_table_and_errors() {
    let o = ssa(&["bounds", "--epsilon", "0.1", "--delta", "0.05", "--n", "2", "--r-lower", "0.5", "--a", "1", "--b", "2"], &[]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("method,t,tv_x,min_x,min_x_raw,tv_z,min_z,min_z_raw\n"));
    assert!(text.lines().nth(1).unwrap().split(',').nth(3) == Some("28352452"));
    let binary = stdout(&ssa(&["bounds", "--epsilon", "0.1", "--delta", "0.05", "--n", "1", "--r-lower", "0.5", "--binary"], &[]));
    assert!(binary.lines().any(|l| l.starts_with("chernoff,1,") && l.split(',').nth(3) == Some("70827")));
    let bad = ssa(&["bounds", "--epsilon", "1.5", "--delta", "0.05", "--n", "1", "--r-lower", "0.5"], &[]);
    assert_eq!(bad.status.code(), Some(2));
}
