use std::path::Path;
use std::process::{Command, Output};

const ZERO_NOISE: &str = "process.sigma_va = 0\nprocess.sigma_vw = 0\n\
measurement.sigma_nx = 0\nmeasurement.sigma_ny = 0\nmeasurement.sigma_ntheta = 0\n";

/// Filter settings for a sensor that is trusted almost completely.
const TRUSTED_SENSOR: &str =
    "measurement.sigma_nx = 1e-6\nmeasurement.sigma_ny = 1e-6\nmeasurement.sigma_ntheta = 1e-6\n";

fn vehpred(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vehpred"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn key_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .parse()
        .unwrap()
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        assert!(vehpred(d.path(), &["generate", "--route", "0:2", "--seed", "7"])
            .status
            .success());
    }
    for name in ["truth.csv", "measurements.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn different_seeds_give_different_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    vehpred(
        p,
        &["generate", "--route", "0:2", "--seed", "1", "--measurements", "a.csv"],
    );
    vehpred(
        p,
        &["generate", "--route", "0:2", "--seed", "2", "--measurements", "b.csv"],
    );
    assert_ne!(
        std::fs::read(p.join("a.csv")).unwrap(),
        std::fs::read(p.join("b.csv")).unwrap()
    );
}

#[test]
fn zero_noise_file_is_tracked_almost_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("zero.cfg"), ZERO_NOISE).unwrap();
    std::fs::write(p.join("trusted.cfg"), TRUSTED_SENSOR).unwrap();
    assert!(vehpred(
        p,
        &["generate", "--route", "0:2", "--seed", "1", "--config", "zero.cfg"]
    )
    .status
    .success());
    let out = vehpred(
        p,
        &[
            "filter",
            "--input",
            "measurements.csv",
            "--output",
            "est.csv",
            "--config",
            "trusted.cfg",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = vehpred(
        p,
        &[
            "evaluate",
            "--truth",
            "truth.csv",
            "--estimate",
            "est.csv",
            "--output",
            "m.txt",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let kv = std::fs::read_to_string(p.join("m.txt")).unwrap();
    assert!(key_value(&kv, "avg_euclid") < 1e-3, "{kv}");
}

#[test]
fn exact_measurements_with_zero_assumed_noise_fail_numerically() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("zero.cfg"), ZERO_NOISE).unwrap();
    vehpred(
        p,
        &["generate", "--route", "0:2", "--seed", "1", "--config", "zero.cfg"],
    );
    let out = vehpred(
        p,
        &[
            "filter",
            "--input",
            "measurements.csv",
            "--output",
            "est.csv",
            "--config",
            "zero.cfg",
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("not invertible"));
}

#[test]
fn benchmark_lands_in_the_reported_band() {
    let dir = tempfile::tempdir().unwrap();
    let out = vehpred(
        dir.path(),
        &["evaluate", "--seed", "1", "--trials", "3", "--output", "bench.txt"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let kv = std::fs::read_to_string(dir.path().join("bench.txt")).unwrap();
    let avg = key_value(&kv, "avg_euclid");
    assert!((0.2..=0.6).contains(&avg), "{kv}");
    assert!(key_value(&kv, "max_euclid") <= 2.5, "{kv}");
    assert_eq!(key_value(&kv, "trials"), 3.0);
    // The report is also printed as a table.
    assert!(String::from_utf8_lossy(&out.stdout).contains("avg_euclid"));
}

#[test]
fn malformed_csv_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "t,x,y,theta\n0,0,0,0\n0.1,1,abc,0\n").unwrap();
    let out = vehpred(dir.path(), &["filter", "--input", "bad.csv", "--output", "o.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("row 3") && msg.contains("column y"), "{msg}");
    assert!(!dir.path().join("o.csv").exists());
}

#[test]
fn wrong_header_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "time,x,y,heading\n0,0,0,0\n").unwrap();
    let out = vehpred(dir.path(), &["segment", "--input", "bad.csv", "--output", "s.jsonl"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn missing_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["filter"][..],
        &["generate", "--route"],
        &["predict", "--input"],
        &["bogus"],
        &[],
    ] {
        let out = vehpred(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
        let msg = stderr(&out);
        assert!(msg.contains("error") || msg.contains("Usage"), "{args:?}: {msg}");
    }
    assert_eq!(vehpred(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn segment_and_predict_write_their_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    vehpred(p, &["generate", "--route", "1:3", "--seed", "4"]);
    let out = vehpred(p, &["segment", "--input", "measurements.csv", "--output", "seg.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = std::fs::read_to_string(p.join("seg.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 2);
    for l in &lines {
        for key in ["tau", "policy", "bic", "params"] {
            assert!(l.get(key).is_some(), "{l}");
        }
    }
    assert_eq!(lines[0]["start"], 0);

    let out = vehpred(
        p,
        &[
            "predict",
            "--input",
            "measurements.csv",
            "--at",
            "120",
            "--output",
            "pred.csv",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let pred = std::fs::read_to_string(p.join("pred.csv")).unwrap();
    let rows: Vec<&str> = pred.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "t,x,y,theta,v,w");
    assert_eq!(rows.len(), 21);
    assert!(pred.starts_with("# prediction={"));
}

#[test]
fn out_of_range_prediction_point_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    vehpred(p, &["generate", "--route", "0:1", "--seed", "2"]);
    let out = vehpred(
        p,
        &[
            "predict",
            "--input",
            "measurements.csv",
            "--at",
            "100000",
            "--output",
            "pred.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn plot_data_is_emitted_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    vehpred(
        p,
        &["generate", "--route", "2:0", "--seed", "3", "--emit-plot-data", "plots"],
    );
    vehpred(
        p,
        &[
            "filter",
            "--input",
            "measurements.csv",
            "--output",
            "est.csv",
            "--emit-plot-data",
            "plots",
        ],
    );
    assert!(p.join("plots/trajectories.csv").exists());
    assert!(p.join("plots/filter_traces.csv").exists());
}
