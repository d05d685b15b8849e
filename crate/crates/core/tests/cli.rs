use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pc3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pc3")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = pc3(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_synthetic(dir: &Path) {
    ok(&["gen-synthetic", "--n-items", "80", "--dim", "12", "--seed", "3", "--out", s(dir)]);
}

#[test]
fn calibrate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_synthetic(&data);
    let feats = data.join("features.csv");
    let ratings = data.join("ratings.json");
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "calibrate", "--features", s(&feats), "--ratings", s(&ratings), "--protocol", "raw-sample",
            "--seed", seed, "--epochs", "4", "--hidden", "16,8", "--out", s(&out),
        ]);
        out
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    for f in ["calibrated.csv", "metrics.json", "trace.csv", "config.json", "head.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("calibrated.csv")).unwrap(), fs::read(c.join("calibrated.csv")).unwrap());

    let trace = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 5);
    assert!(trace.starts_with("epoch,data_fit_loss,constraint_loss,total_loss,mu_digest"));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "--threads", threads, "experiment", "--kind", "calibration", "--seed", "1", "--repeats", "3",
            "--n-items", "60", "--dim", "10", "--epochs", "3", "--hidden", "8,4", "--out", s(&out),
        ]);
        fs::read(out.join("calibration_metrics.json")).unwrap()
    };
    assert_eq!(run("one", "1"), run("four", "4"));
}

#[test]
fn evaluate_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("l.csv");
    fs::write(&p, "item_id,ground_truth\na,1\nb,2.5\nc,2\nd,4\n").unwrap();
    let out = ok(&["evaluate", "--pred", s(&p), "--truth", s(&p)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["srcc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((v["krocc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["mse"].as_f64().unwrap(), 0.0);
}

#[test]
fn synthesize_then_calibrate_from_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_synthetic(&data);
    let sos = tmp.path().join("sos.csv");
    ok(&["synthesize-sos", "--ratings", s(&data.join("ratings.json")), "--protocol", "raw-sample",
         "--seed", "2", "--out", s(&sos)]);
    let text = fs::read_to_string(&sos).unwrap();
    assert!(text.starts_with("item_id,sos,ground_truth\n"));
    assert_eq!(text.lines().count(), 81);

    let out = tmp.path().join("cal");
    ok(&["calibrate", "--features", s(&data.join("features.csv")), "--labels", s(&sos),
         "--alpha", "0", "--epochs", "2", "--hidden", "4,4", "--out", s(&out)]);
    // alpha = 0 never moves an estimate.
    let cal = pc3::io::read_labels(&out.join("calibrated.csv")).unwrap();
    let input = pc3::io::read_labels(&sos).unwrap();
    assert_eq!(cal.column("calibrated").unwrap(), input.column("sos").unwrap());
}

#[test]
fn warm_start_from_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_synthetic(&data);
    let args = |out: &Path, extra: &[&str]| {
        let mut v = vec![
            "calibrate".to_string(), "--features".into(), s(&data.join("features.csv")).into(),
            "--ratings".into(), s(&data.join("ratings.json")).into(), "--protocol".into(), "raw-sample".into(),
            "--epochs".into(), "2".into(), "--hidden".into(), "8,4".into(), "--out".into(), s(out).into(),
        ];
        v.extend(extra.iter().map(|x| x.to_string()));
        v
    };
    let first = tmp.path().join("first");
    let a = args(&first, &[]);
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let second = tmp.path().join("second");
    let head = first.join("head.bin");
    let b = args(&second, &["--init-head", s(&head)]);
    ok(&b.iter().map(String::as_str).collect::<Vec<_>>());
    assert_ne!(fs::read(first.join("head.bin")).unwrap(), fs::read(second.join("head.bin")).unwrap());

    let bad = tmp.path().join("bad.bin");
    fs::write(&bad, b"not a checkpoint").unwrap();
    let c = args(&tmp.path().join("third"), &["--init-head", s(&bad)]);
    assert_eq!(pc3(&c.iter().map(String::as_str).collect::<Vec<_>>()).status.code(), Some(1));
}

#[test]
fn alpha_zero_row_equals_sos_row() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "experiment", "--kind", "alpha-sweep", "--seed", "0", "--repeats", "2", "--n-items", "60",
        "--dim", "10", "--epochs", "3", "--hidden", "8,4", "--alphas", "0,0.5", "--out", s(tmp.path()),
    ]);
    let table = fs::read_to_string(tmp.path().join("alpha-sweep_table.csv")).unwrap();
    let metrics_of = |prefix: &str| -> String {
        let line = table.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("{prefix}\n{table}"));
        line.splitn(3, ',').nth(2).unwrap().to_string()
    };
    assert_eq!(metrics_of("baseline,SOS,"), metrics_of("alpha=0,PC3,"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(pc3(&["--help"]).status.code(), Some(0));
    assert_eq!(pc3(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(pc3(&["calibrate"]).status.code(), Some(1));

    let bad_cfg = tmp.path().join("c.json");
    fs::write(&bad_cfg, r#"{"alhpa": 0.5}"#).unwrap();
    let data = tmp.path().join("data");
    small_synthetic(&data);
    let out = pc3(&[
        "calibrate", "--features", s(&data.join("features.csv")), "--ratings", s(&data.join("ratings.json")),
        "--protocol", "raw-sample", "--config", s(&bad_cfg), "--out", s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alhpa"));

    let out = pc3(&[
        "calibrate", "--features", s(&data.join("features.csv")), "--ratings", s(&data.join("ratings.json")),
        "--protocol", "gaussian", "--out", s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offending items"));

    let out = pc3(&["evaluate", "--pred", "/nonexistent.csv", "--truth", "/nonexistent.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
