use std::fs;
use std::path::Path;
use std::process::Command;

fn robotseg(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_robotseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("ROBOTSEG_DATASET")
        .output()
        .expect("spawn")
}

fn ok(args: &[&str]) {
    let out = robotseg(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn synth_evaluate_and_learn() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let ds = d.to_str().unwrap();
    ok(&["synth", "--out", ds, "--count", "3", "--seed", "9"]);

    ok(&[
        "evaluate",
        "--dataset",
        ds,
        "--system",
        "gca",
        "--B",
        "3",
        "--out",
        &p("ev"),
    ]);
    let csv = fs::read_to_string(dir.path().join("ev/per_image.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(
        json(&dir.path().join("ev/summary.json"))["summary"]["evaluated"],
        3
    );
    let curves = fs::read_to_string(dir.path().join("ev/curves.jsonl")).unwrap();
    assert_eq!(curves.lines().count(), 3);

    fs::write(p("grid.json"), r#"{"w_i": [1.0, 4.0]}"#).unwrap();
    ok(&[
        "learn-linesearch",
        "--dataset",
        ds,
        "--system",
        "GCS",
        "--protocol",
        "brush",
        "--grid-file",
        &p("grid.json"),
        "--params",
        "w_i",
        "--out",
        &p("ls.json"),
    ]);
    let ls = json(&dir.path().join("ls.json"));
    assert_eq!(ls["sweeps"][0]["grid"], serde_json::json!([1.0, 4.0]));

    ok(&[
        "learn-maxmargin",
        "--dataset",
        ds,
        "--T",
        "1",
        "--folds",
        "3",
        "--B",
        "2",
        "--out",
        &p("mm.json"),
    ]);
    let mm = json(&dir.path().join("mm.json"));
    assert_eq!(mm["folds"].as_array().unwrap().len(), 3);
    assert_eq!(
        mm["folds"][0]["training"]["trajectory"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = robotseg(&[
        "evaluate",
        "--dataset",
        dir.path().to_str().unwrap(),
        "--out",
        "x",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no images"));

    fs::write(dir.path().join("g.json"), r#"{"w_z": [1.0]}"#).unwrap();
    ok(&[
        "synth",
        "--out",
        dir.path().to_str().unwrap(),
        "--count",
        "1",
    ]);
    let out = robotseg(&[
        "learn-linesearch",
        "--dataset",
        dir.path().to_str().unwrap(),
        "--grid-file",
        dir.path().join("g.json").to_str().unwrap(),
        "--out",
        "x",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("w_z"));

    assert_eq!(
        robotseg(&["evaluate", "--system", "XX"]).status.code(),
        Some(2)
    );
}
