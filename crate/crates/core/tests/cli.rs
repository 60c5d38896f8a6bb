use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use extranormal::analysis::{read_pmat, MatrixKind, PairDossier};
use extranormal::estimators::CalibrationCurve;
use extranormal::grid::load_field;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_extranormal"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small grid plus a cheap calibration curve in a fresh directory.
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    ok(
        &[
            "synth",
            "--spec",
            r#"{"kind":"quadratic_coupled","T":240,"N":10,"seed":11,"params":{"noise_scale":0.3}}"#,
            "--out",
            "grid.bin",
        ],
        &dir,
    );
    ok(&["calibrate", "-T", "240", "--replicates", "100", "--out", "cal.json"], &dir);
    (tmp, dir)
}

fn analyze(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "analyze",
        "--input",
        "grid.bin",
        "--calibration",
        "cal.json",
        "--surrogates",
        "19",
        "--alpha",
        "0.05",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    ok(&args, dir)
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn rerun_is_byte_identical_and_thread_count_free() {
    let (_tmp, dir) = workspace();
    let flags = ["--pair", "0,1", "--scatter-sample", "6"];
    analyze(&dir, "a", &[&["--threads", "1"][..], &flags].concat());
    let snapshot: Vec<(String, Vec<u8>)> = sorted_files(&dir.join("a"))
        .into_iter()
        .map(|n| {
            let bytes = fs::read(dir.join("a").join(&n)).unwrap();
            (n, bytes)
        })
        .collect();
    assert!(!snapshot.iter().any(|(n, _)| n.starts_with(".partial")));
    analyze(&dir, "a", &[&["--threads", "1"][..], &flags].concat());
    assert_eq!(sorted_files(&dir.join("a")).len(), snapshot.len());
    for (name, bytes) in &snapshot {
        assert_eq!(&fs::read(dir.join("a").join(name)).unwrap(), bytes, "{name} differs on rerun");
    }
    // only the thread count is recorded differently
    analyze(&dir, "a", &[&["--threads", "3"][..], &flags].concat());
    for (name, bytes) in &snapshot {
        if name != "run_config.json" {
            assert_eq!(&fs::read(dir.join("a").join(name)).unwrap(), bytes, "{name} depends on threads");
        }
    }
}

#[test]
fn bad_alpha_fails_before_any_output() {
    let (_tmp, dir) = workspace();
    let out = run(
        &["analyze", "--input", "grid.bin", "--calibration", "cal.json", "--alpha", "0.7", "--out", "r"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert!(!dir.join("r").exists());
}

#[test]
fn missing_input_and_bad_pair_are_config_errors() {
    let (_tmp, dir) = workspace();
    let out = run(&["analyze", "--input", "nope.bin", "--out", "r"], &dir);
    assert_eq!(out.status.code(), Some(2));
    let out = run(
        &["analyze", "--input", "grid.bin", "--calibration", "cal.json", "--pair", "3,3", "--out", "r"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mismatched_calibration_is_a_data_error() {
    let (_tmp, dir) = workspace();
    ok(&["calibrate", "-T", "120", "--replicates", "100", "--out", "short.json"], &dir);
    let out = run(
        &["analyze", "--input", "grid.bin", "--calibration", "short.json", "--out", "r"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn extract_matches_stored_matrices() {
    let (_tmp, dir) = workspace();
    analyze(&dir, "run", &[]);
    ok(&["extract", "--run", "run", "--pair", "2,7", "--pair", "0,1"], &dir);
    let run_dir = dir.join("run");
    let mi = read_pmat(&run_dir.join("mi.pmat")).unwrap();
    let corr = read_pmat(&run_dir.join("correlation.pmat")).unwrap();
    for (i, j) in [(2, 7), (0, 1)] {
        let text = fs::read_to_string(run_dir.join(format!("pair_{i}_{j}.json"))).unwrap();
        let d: PairDossier = serde_json::from_str(&text).unwrap();
        assert_eq!(d.mi_calibrated as f32, mi.get(i, j));
        assert_eq!(d.correlation as f32, corr.get(i, j));
        assert_eq!(d.x.len(), 240);
        let csv = fs::read_to_string(run_dir.join(format!("pair_{i}_{j}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 241);
        assert!(csv.starts_with("t,phase,x,y"));
    }
    // quadratic pairs are (0,1), (2,3), ...: strong MI, weak correlation
    assert!(mi.get(0, 1) > 0.3);
}

#[test]
fn fields_recompute_matches_run_output() {
    let (_tmp, dir) = workspace();
    analyze(&dir, "run", &[]);
    ok(&["fields", "--run", "run", "--out", "again"], &dir);
    for name in ["mi_mean", "mi_surr_mean", "extra_normal", "extra_normal_relative"] {
        let a = fs::read(dir.join("run").join(format!("{name}.csv"))).unwrap();
        let b = fs::read(dir.join("again").join(format!("{name}.csv"))).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let (_, mi) = load_field(&dir.join("run/mi_mean.csv")).unwrap();
    let (_, surr) = load_field(&dir.join("run/mi_surr_mean.csv")).unwrap();
    let (nodes, extra) = load_field(&dir.join("run/extra_normal.csv")).unwrap();
    assert_eq!(nodes.len(), 10);
    for k in 0..nodes.len() {
        let expected = mi[k].unwrap() - surr[k].unwrap();
        assert!((extra[k].unwrap() - expected).abs() < 1e-8, "node {k}");
    }
}

#[test]
fn calibrate_writes_monotone_curve_anchored_at_zero() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["calibrate", "-T", "180", "--bins", "6", "--replicates", "100", "--seed", "4", "--out", "c.json"], tmp.path());
    let curve = CalibrationCurve::from_json(&fs::read_to_string(tmp.path().join("c.json")).unwrap()).unwrap();
    assert_eq!((curve.len, curve.q, curve.seed, curve.replicates), (180, 6, 4, 100));
    assert_eq!(curve.knots[0][1], 0.0);
    assert_eq!(curve.apply(curve.knots[0][0]), 0.0);
    assert!(curve.knots.windows(2).all(|w| w[0][0] < w[1][0] && w[0][1] < w[1][1]));
}

#[test]
fn config_file_and_flags_agree() {
    let (_tmp, dir) = workspace();
    let config = serde_json::json!({
        "input": {"path": "grid.bin", "format": "flatbin"},
        "stages": ["anomaly", "varnorm", "detrend"],
        "bins": 8,
        "calibration": {"path": "cal.json"},
        "surrogates": {"n": 19, "seed": 0},
        "alpha": 0.05,
        "outputs": {"dir": "from_config"}
    });
    fs::write(dir.join("run.json"), config.to_string()).unwrap();
    ok(&["analyze", "--config", "run.json"], &dir);
    analyze(&dir, "from_flags", &[]);
    for name in ["mi.pmat", "exceed_count.pmat", "summary.json"] {
        assert_eq!(
            fs::read(dir.join("from_config").join(name)).unwrap(),
            fs::read(dir.join("from_flags").join(name)).unwrap(),
            "{name}"
        );
    }
    let sig = read_pmat(&dir.join("from_config/significant.pmat")).unwrap();
    assert_eq!(sig.kind(), MatrixKind::Significant);
}

#[test]
fn summary_on_stdout_and_unknown_config_keys_rejected() {
    let (_tmp, dir) = workspace();
    let out = analyze(&dir, "run", &["--summary-stdout"]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["significance"]["threshold"], 19);
    assert_eq!(summary["N"], 10);

    fs::write(
        dir.join("bad.json"),
        r#"{"input":{"path":"grid.bin","format":"flatbin"},"outputs":{"dir":"x"},"surogates":{}}"#,
    )
    .unwrap();
    assert_eq!(run(&["analyze", "--config", "bad.json"], &dir).status.code(), Some(2));
}
