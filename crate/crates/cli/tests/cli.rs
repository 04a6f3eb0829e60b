use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn softcrawl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softcrawl"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{ not json");
    let o = softcrawl(&[
        "speed-map",
        "--config",
        &bad,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{ "optimizer": { "budjet": 60 } }"#,
    );
    let o = softcrawl(&["speed-map", "--config", &bad]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("budjet"));
}

#[test]
fn crawl_without_a_roof_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = softcrawl(&["crawl", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_roof_flag_is_a_config_error() {
    let o = softcrawl(&["crawl", "--roof", "zigzag"]);
    assert_eq!(code(&o), 2);
    let o = softcrawl(&["crawl", "--roof", "file:/nonexistent/roof.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_height_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{ "speed_map": { "heights_cm": [] } }"#,
    );
    let o = softcrawl(&[
        "speed-map",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_sample_set_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    fs::create_dir(&samples).unwrap();
    write(&samples, "voltages.csv", "file,v1,v2,v3,v4,v5\n");
    let o = softcrawl(&[
        "calibrate",
        "--samples",
        samples.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn speed_map_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = softcrawl(&["speed-map", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("speed_vs_height.csv")).unwrap();
    assert_eq!(table.lines().count(), 17);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["command"], "speed-map");
    assert!(metrics["results"]["quadratic_r2"].as_f64().unwrap() > 0.99);
}

#[test]
fn calibrate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{ "plant": { "deviation": { "kind": "smooth", "amplitude_cm_per_v": 1e-4, "seed": 2 } } }"#,
    );
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = softcrawl(&[
            "calibrate",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("correction.csv")).unwrap()
    };
    let a = run("a", "7");
    assert_eq!(a, run("b", "7"));
    assert_ne!(a, run("c", "8"));
}

#[test]
fn version_flag_reports_build() {
    let o = softcrawl(&["--version"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("softcrawl 0.1.0"));
}

#[test]
fn uncalibrated_deviated_plant_hits_the_safety_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{
            "plant": { "deviation": { "kind": "smooth", "amplitude_cm_per_v": 5e-4, "seed": 1 }, "noise_std_cm": 0.0 },
            "calibration": { "epochs": 0 },
            "roof": { "margin_cm": 0.1, "profile": { "kind": "slanted", "left_cm": 1.5, "right_cm": 1.5, "start_cm": 0, "end_cm": 60 } }
        }"#,
    );
    let out = dir.path().join("out");
    let o = softcrawl(&["crawl", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("trajectory.csv").exists());
}
