use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lba_core::budget::{fit_time_model, TimeModel};
use lba_core::io::{read_calibration_csv, read_results_csv};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lba-bench")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_SWEEP: &str = r#"{
    "scene": {"n_cameras": 8, "n_points": 300},
    "methods": ["gg", "covis", "random", "full"],
    "fractions": [0.5, 1.0],
    "repeats": 2
}"#;

#[test]
fn simulate_writes_an_audited_reproducible_scene() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let out = bench(&["simulate", "--seed", "4", "--out", p(&a)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let audit = String::from_utf8(out.stdout).unwrap();
    let min_points: usize = audit
        .split("min points/camera ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap();
    assert!(min_points >= 20, "{audit}");
    assert!(audit.starts_with("cameras 50 "));
    assert!(bench(&["simulate", "--seed", "4", "--out", p(&b)]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let parsed = bench(&["parse", p(&a), "--out", p(&dir.path().join("c.json"))]);
    assert!(parsed.status.success());
    assert!(String::from_utf8_lossy(&parsed.stdout).contains("round trip ok"));
}

#[test]
fn sweep_rows_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, SMALL_SWEEP).unwrap();
    let one = dir.path().join("one.csv");
    let two = dir.path().join("two.csv");
    for (out, w) in [(&one, "1"), (&two, "2")] {
        let o = bench(&["sweep", "--config", p(&cfg), "--workers", w, "--no-timing", "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&one).unwrap();
    assert_eq!(text, fs::read_to_string(&two).unwrap());
    let rows = read_results_csv(&text).unwrap();
    assert_eq!(rows.len(), 4 * 2 * 2);
    for r in rows.iter().filter(|r| r.method == "full") {
        assert_eq!(r.cameras_selected, 8);
        assert_eq!(r.selection_ms, 0.0);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = bench(&["sweep", "--fractions", "0.5,1.5", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(bad.status.code(), Some(2));
    let missing = bench(&["sweep", "--config", p(&dir.path().join("missing.json"))]);
    assert_eq!(missing.status.code(), Some(2));
    let unknown = bench(&["sweep", "--methods", "gg,best", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(unknown.status.code(), Some(2));

    // Enumeration is infeasible at this size, so every oracle trial fails.
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"scene": {"n_cameras": 30, "n_points": 400}, "methods": ["covis", "oracle"], "fractions": [0.5], "repeats": 1}"#,
    )
    .unwrap();
    let out = dir.path().join("fail.csv");
    let failing = bench(&["sweep", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(failing.status.code(), Some(3));
    assert_eq!(read_results_csv(&fs::read_to_string(&out).unwrap()).unwrap().len(), 1);
}

#[test]
fn calibrate_then_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("calib.json");
    fs::write(&cfg, r#"{"scene": {"n_cameras": 12, "n_points": 400}}"#).unwrap();
    let model_path = dir.path().join("model.json");
    let o = bench(&["calibrate", "--config", p(&cfg), "--ks", "3,6,9,12", "--repeats", "3", "--out", p(&model_path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model: TimeModel = serde_json::from_str(&fs::read_to_string(&model_path).unwrap()).unwrap();
    assert_eq!(model.coefficients.len(), 4);
    let samples = read_calibration_csv(&fs::read_to_string(model_path.with_extension("csv")).unwrap()).unwrap();
    assert_eq!(samples.len(), 12);
    assert_eq!(fit_time_model(&samples).unwrap().coefficients, model.coefficients);

    let too_few = bench(&["calibrate", "--config", p(&cfg), "--ks", "3,6", "--out", p(&dir.path().join("m2.json"))]);
    assert_eq!(too_few.status.code(), Some(2));

    let pcfg = dir.path().join("pipe.json");
    fs::write(&pcfg, r#"{"scene": {"n_cameras": 12, "n_points": 400}}"#).unwrap();
    let trace = dir.path().join("trace.csv");
    let o = bench(&["pipeline", "--config", p(&pcfg), "--model", p(&model_path), "--out", p(&trace)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&trace).unwrap();
    // Header plus one row per keyframe from the third on, for each of the two modes.
    assert_eq!(text.lines().count(), 1 + 2 * 10);
    assert!(text.starts_with("mode,keyframe,n0,n_future,t_b_ms,k,m,triggered"));
}

#[test]
fn parse_rejects_garbage_with_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("broken.bal");
    fs::write(&f, "3 2 1\n0 0 1.0 nan\n").unwrap();
    let o = bench(&["parse", p(&f)]);
    assert!(!o.status.success());
    let unknown = dir.path().join("scene.xyz");
    fs::write(&unknown, "").unwrap();
    assert_eq!(bench(&["parse", p(&unknown)]).status.code(), Some(2));
}
