use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn betdetect(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_betdetect"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .env_remove("BETDETECT_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_paired(path: &Path, rows: &[(f64, f64)]) {
    let mut s = String::from("score_x,score_y\n");
    for (x, y) in rows {
        s.push_str(&format!("{x},{y}\n"));
    }
    fs::write(path, s).unwrap();
}

fn write_pool(path: &Path, values: &[f64]) {
    let mut s = String::from("score\n");
    for v in values {
        s.push_str(&format!("{v}\n"));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn detect_declares_at_constructed_crossing() {
    // g = -1 every round with d = 1: theta_1 = 0, then theta sits at the cap 1/2,
    // so W_t = 1.5^(t-1). W_6 = 7.59 < 10 <= W_7 = 11.39.
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cross.csv");
    write_paired(&csv, &[(0.0, 1.0); 12]);
    let out = betdetect(
        dir.path(),
        &[
            "detect",
            "--set",
            &format!("file=\"{}\"", csv.display()),
            "--set",
            "mode=simple",
            "--set",
            "d=1",
            "--set",
            "alpha=0.1",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("rejection_time  7"), "{}", stdout(&out));
    let outcome = read_json(&dir.path().join("outcome.json"));
    assert_eq!(outcome["decision"], "llm_declared_anytime");
    assert_eq!(outcome["rejection_time"], 7);
    let traj = outcome["trajectory"].as_array().unwrap();
    assert_eq!(traj.len(), 7);
    let w7 = traj[6]["a"]["wealth"].as_f64().unwrap();
    assert!((w7 - 1.5f64.powi(6)).abs() < 1e-12);
}

#[test]
fn missing_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_scores.csv");
    let out = betdetect(
        dir.path(),
        &["detect", "--set", &format!("file=\"{}\"", missing.display()), "--set", "d=1", "--set", "epsilon=0.1"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("no_such_scores.csv"), "{}", stderr(&out));
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = betdetect(dir.path(), &["detect", "--set", "preset=h0-identical", "--set", "alpha=1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("alpha"));

    let out = betdetect(dir.path(), &["detect", "--set", "preset=h0-identical", "--set", "bogus_key=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus_key"));

    // Bet at theta = 1/2 meets g = 4: wealth factor 1 - 4 * 0.5 < 0 aborts.
    let csv = dir.path().join("violate.csv");
    write_paired(&csv, &[(0.0, 1.0), (0.0, 1.0), (4.0, 0.0), (0.0, 0.0)]);
    let out = betdetect(
        dir.path(),
        &[
            "detect",
            "--set",
            &format!("file=\"{}\"", csv.display()),
            "--set",
            "mode=simple",
            "--set",
            "d=1",
            "--set",
            "alpha=0.01",
            "--set",
            "violation_policy=abort",
        ],
    );
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn identical_preset_is_retained_to_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = betdetect(
        dir.path(),
        &["detect", "--set", "preset=h0-identical", "--set", "mode=simple", "--set", "d=6", "--set", "time_budget=100"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let outcome = read_json(&dir.path().join("outcome.json"));
    assert_eq!(outcome["rejection_time"], 100);
    assert_ne!(outcome["decision"], "llm_declared_anytime");
}

#[test]
fn config_file_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    write_paired(&dir.path().join("s.csv"), &[(0.0, 1.0); 12]);
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "mode = \"simple\"\nalpha = 0.1\nd = 1.0\nfile = \"s.csv\"\n").unwrap();
    let out = betdetect(dir.path(), &["detect", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(read_json(&dir.path().join("outcome.json"))["rejection_time"], 7);
}

fn evaluate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["evaluate", "--set", "preset=fastdetect-neo27-avg", "--set", "runs=10", "--seed", "5"];
    args.extend_from_slice(extra);
    betdetect(dir, &args)
}

#[test]
fn evaluate_emits_full_grid_deterministically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, ob) = (evaluate(a.path(), &[]), evaluate(b.path(), &[]));
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert!(ob.status.success());
    for name in ["report.csv", "report.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
    let csv = fs::read_to_string(a.path().join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("alpha,fpr,mean_tau,declared_fraction_h1"));
    assert_eq!(lines.count(), 20);
    let json = read_json(&a.path().join("report.json"));
    assert_eq!(json["master_seed"], 5);
    assert_eq!(json["runs"], 10);
}

#[test]
fn evaluate_alpha_override_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = evaluate(dir.path(), &["--set", "alpha=0.05", "--format", "csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("0.05,"));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn presets_lists_every_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = betdetect(dir.path(), &["presets"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in betdetect::stream::PRESET_NAMES {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn calibrate_estimated_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("pool.csv");
    let values: Vec<f64> = (0..20).map(|i| ((i * 37) % 11) as f64 * 0.25).collect();
    write_pool(&pool, &values);
    let args = ["calibrate", "--set", &format!("pool=\"{}\"", pool.display()), "--seed", "9"];
    let out = betdetect(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr(&out));
    let first = fs::read(dir.path().join("calibration.json")).unwrap();
    assert!(betdetect(dir.path(), &args).status.success());
    assert_eq!(first, fs::read(dir.path().join("calibration.json")).unwrap());
    let cal = read_json(&dir.path().join("calibration.json"));
    assert_eq!(cal["provenance"], "estimated");
    let d_expected = 2.0 * values[..10].iter().zip(&values[10..]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert_eq!(cal["d"].as_f64().unwrap(), d_expected);
}

#[test]
fn calibrate_constant_pool_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("flat.csv");
    write_pool(&pool, &[1.5; 20]);
    let out = betdetect(dir.path(), &["calibrate", "--set", &format!("pool=\"{}\"", pool.display())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("degenerate"), "{}", stderr(&out));
}

#[test]
fn calibrate_short_pool_names_the_count() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("short.csv");
    write_pool(&pool, &[1.0, 2.0, 3.0]);
    let out = betdetect(dir.path(), &["calibrate", "--set", &format!("pool=\"{}\"", pool.display())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("20"), "{}", stderr(&out));
}

#[test]
fn calibrate_oracle_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let a = [0.5, 1.25, -0.75, 2.0];
    let b = [3.0, 2.5, 4.25];
    write_pool(&dir.path().join("a.csv"), &a);
    write_pool(&dir.path().join("b.csv"), &b);
    let out = betdetect(
        dir.path(),
        &[
            "calibrate",
            "--set",
            "calibration_mode=oracle",
            "--set",
            &format!("pool=\"{}\"", dir.path().join("a.csv").display()),
            "--set",
            &format!("pool_b=\"{}\"", dir.path().join("b.csv").display()),
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let cal = read_json(&dir.path().join("calibration.json"));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let eps = (mean(&a) - mean(&b)).abs();
    let d = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!((cal["epsilon"].as_f64().unwrap() - eps).abs() < 1e-12);
    assert_eq!(cal["d"].as_f64().unwrap(), d);
    assert_eq!(cal["provenance"], "oracle");
}

fn gap_file(dir: &Path, gap: f64) -> String {
    let path = dir.join(format!("gap{gap}.csv"));
    let rows: Vec<(f64, f64)> = (0..100).map(|i| ((i % 7) as f64 * 0.1, gap + (i % 5) as f64 * 0.1)).collect();
    write_paired(&path, &rows);
    format!("file=\"{}\"", path.display())
}

#[test]
fn baseline_closed_gate_computes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let file = gap_file(dir.path(), 1.0);
    let out = betdetect(dir.path(), &["baseline", "--set", &file, "--set", "epsilon=1e6"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let res = read_json(&dir.path().join("baseline.json"));
    assert_eq!(res["decision"], "retained");
    assert_eq!(res["rejection_time"], 100);
    assert!(res["batches"].as_array().unwrap().iter().all(|b| b["p_value"].is_null()));
}

#[test]
fn baseline_huge_gap_rejects_first_batch() {
    let dir = tempfile::tempdir().unwrap();
    let file = gap_file(dir.path(), 100.0);
    let out = betdetect(dir.path(), &["baseline", "--set", &file, "--set", "batch_size=25"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let res = read_json(&dir.path().join("baseline.json"));
    assert_eq!(res["rejection_time"], 25);
}

#[test]
fn baseline_geometric_thresholds_halve() {
    let dir = tempfile::tempdir().unwrap();
    let file = gap_file(dir.path(), 0.0);
    let out = betdetect(
        dir.path(),
        &["baseline", "--set", &file, "--set", "correction=geometric", "--set", "epsilon=1e6", "--set", "alpha=0.08"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let res = read_json(&dir.path().join("baseline.json"));
    let th: Vec<f64> = res["batches"].as_array().unwrap().iter().map(|b| b["threshold"].as_f64().unwrap()).collect();
    assert_eq!(th, vec![0.04, 0.02, 0.01, 0.005]);
    assert!(stdout(&out).contains("0.04"));
}
