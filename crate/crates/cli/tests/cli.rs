use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn phantom(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phantom"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn replay_and_worker_count_give_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let runs = [
        ("a", vec!["sectorial-test", "--reps", "300", "--seed", "7"]),
        ("b", vec!["sectorial-test", "--reps", "300", "--seed", "7"]),
        (
            "c",
            vec![
                "sectorial-test",
                "--reps",
                "300",
                "--seed",
                "7",
                "--workers",
                "1",
            ],
        ),
    ];
    for (dir, args) in &runs {
        let out = phantom(args, &tmp.path().join(dir));
        assert!(
            out.status.code().is_some_and(|c| c != 1),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let csv = read(&tmp.path().join("a"), "results.csv");
    assert_eq!(csv, read(&tmp.path().join("b"), "results.csv"));
    assert_eq!(csv, read(&tmp.path().join("c"), "results.csv"));
    let other = phantom(
        &["sectorial-test", "--reps", "300", "--seed", "8"],
        &tmp.path().join("d"),
    );
    assert!(other.status.code().is_some());
    assert_ne!(csv, read(&tmp.path().join("d"), "results.csv"));
}

#[test]
fn summary_embeds_resolved_config_and_version() {
    let tmp = TempDir::new().unwrap();
    let out = phantom(&["extremal-index", "--seed", "99"], tmp.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&read(tmp.path(), "summary.json")).unwrap();
    assert_eq!(summary["command"], "extremal-index");
    assert_eq!(summary["config"]["seed"], 99);
    assert_eq!(summary["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(summary["verdicts"]["theta_near_limit"], true);
    assert!(read(tmp.path(), "results.csv").lines().count() > 1);
}

#[test]
fn malformed_config_exits_one_with_location() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("bad.json");
    fs::write(
        &config,
        "{\n  \"seed\": 1,\n  \"sectorial\": {\"n_grd\": [5]}\n}\n",
    )
    .unwrap();
    let out = phantom(
        &["sectorial-test", "--config", config.to_str().unwrap()],
        &tmp.path().join("o"),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_grd") && err.contains("line 3"), "{err}");
    assert!(!tmp.path().join("o").join("results.csv").exists());
}

#[test]
fn invalid_parameter_exits_one() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("c.json");
    fs::write(&config, r#"{"covariance": {"gamma1": 0.1, "gamma2": 0.1}}"#).unwrap();
    let out = phantom(
        &["berman", "--config", config.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let zero = phantom(&["berman", "--workers", "0"], tmp.path());
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn failed_verdict_exits_two_and_still_writes_outputs() {
    // the default separation requirement is out of reach at these N
    let tmp = TempDir::new().unwrap();
    let out = phantom(&["directional-test"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let summary: serde_json::Value =
        serde_json::from_str(&read(tmp.path(), "summary.json")).unwrap();
    assert_eq!(summary["verdicts"]["limit_separated_from_gumbel"], false);
    assert_eq!(summary["verdicts"]["approach_monotone"], true);
}

#[test]
fn simulate_writes_the_field() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("c.json");
    fs::write(
        &config,
        r#"{"simulate": {"model": {"kind": "iid", "marginal": {"law": "uniform"}}, "dims": [3, 4]}}"#,
    )
    .unwrap();
    let out = phantom(
        &["simulate", "--config", config.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(tmp.path(), "results.csv");
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let values: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(values.len(), 4);
        assert!(values.iter().all(|v| (0.0..1.0).contains(v)));
    }
}
