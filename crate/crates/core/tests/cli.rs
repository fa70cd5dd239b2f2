//! End-to-end exercises of the command-line interface via the built binary.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;

use rand::Rng;

use ecosampler::phenology::{synth_evi, DoubleLogistic};
use ecosampler::raster::Raster;
use ecosampler::sampler::seeded_rng;

const BIN: &str = env!("CARGO_BIN_EXE_ecosampler");

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn version_reports_format_versions() {
    let out = run(&["--version"]);
    assert!(out.status.success());
    let out = run(&["--help"]);
    assert!(out.status.success());
    let long = Command::new(BIN).arg("-V").output().unwrap();
    assert!(long.status.success());
    let full = Command::new(BIN).args(["--version"]).output().unwrap();
    assert!(String::from_utf8_lossy(&full.stdout).contains("ecosampler"));
}

#[test]
fn manifest_validate_rejects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.jsonl");
    fs::write(&path, "{\"format_version\":1,\"grid\"").unwrap();
    let out = run(&["manifest-validate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_config_is_an_error() {
    let out = run(&["grid"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

fn write_fixture(dir: &Path) -> String {
    // a few land cells around the equator; coarse spacing keeps this tiny
    let mut mask = Raster::constant(18, 36, 0.0);
    mask.set(9, 18, 1.0); // lat 0..10, lon 0..10
    mask.set(9, 19, 1.0);
    mask.write(&dir.join("mask")).unwrap();
    fs::write(dir.join("evi.csv"), "").unwrap();
    fs::write(dir.join("catalog.jsonl"), "").unwrap();
    let config = format!(
        r#"
seed = 7

[grid]
spacing_km = 500.0

[paths]
mask = "{d}/mask"
evi_csv = "{d}/evi.csv"
catalog = "{d}/catalog.jsonl"
output_dir = "{d}/out"
"#,
        d = dir.display()
    );
    let config_path = dir.join("config.toml");
    fs::write(&config_path, config).unwrap();
    config_path.to_str().unwrap().to_string()
}

fn fill_inputs_for_points(dir: &Path) {
    let points: Vec<serde_json::Value> = fs::read_to_string(dir.join("out/points.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!points.is_empty());

    let mut evi = fs::File::create(dir.join("evi.csv")).unwrap();
    let mut catalog = fs::File::create(dir.join("catalog.jsonl")).unwrap();
    for p in &points {
        let pid = p["id"].as_u64().unwrap();
        let curve = synth_evi(
            &DoubleLogistic {
                base: 0.1,
                amplitude: 0.5,
                rise_day: 100.0,
                fall_day: 250.0,
                rise_rate: 0.1,
                fall_rate: 0.1,
            },
            2021,
        )
        .unwrap();
        for (i, v) in curve.values.iter().enumerate() {
            writeln!(evi, "{pid},2021,{},{v:.6}", i + 1).unwrap();
        }
        let mut rng = seeded_rng(pid);
        for s in 0..12 {
            let month = rng.gen_range(1..=12);
            let day = rng.gen_range(1..=28);
            let cloud: f64 = rng.gen_range(0.0..0.4);
            writeln!(
                catalog,
                r#"{{"scene_id":"P{pid}-{s}","point_id":{pid},"datetime":"2020-{month:02}-{day:02}T00:00:00Z","cloud_fraction":{cloud:.3}}}"#
            )
            .unwrap();
        }
    }
}

#[test]
fn pipeline_stages_compose_and_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());

    let out = run(&["--config", &config, "grid"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    fill_inputs_for_points(dir.path());

    for stage in ["pheno", "select", "weights"] {
        let out = run(&["--config", &config, stage]);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let manifest_path = dir.path().join("out/manifest.jsonl");
    let first = fs::read(&manifest_path).unwrap();
    assert!(!first.is_empty());

    let out = run(&["manifest-validate", manifest_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("summary must be JSON");
    assert!(summary["records"].as_u64().unwrap() > 0);

    // rerunning every stage must reproduce the manifest byte for byte
    for stage in ["grid", "pheno", "select", "weights"] {
        let out = run(&["--config", &config, stage]);
        assert!(out.status.success());
    }
    let second = fs::read(&manifest_path).unwrap();
    assert_eq!(first, second);

    // a flag override must take effect and fail validation when bad
    let out = run(&["--config", &config, "select", "--max-cloud", "1.5"]);
    assert!(!out.status.success());
}

#[test]
fn eval_subcommand_runs_knn() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = seeded_rng(33);
    let emb = dir.path().join("emb.csv");
    let labels = dir.path().join("labels.jsonl");
    let mut ef = fs::File::create(&emb).unwrap();
    let mut lf = fs::File::create(&labels).unwrap();
    for i in 0..60 {
        let cls = i % 2;
        let cx = if cls == 0 { -1.0 } else { 1.0 };
        let a: f64 = cx + rng.gen_range(-0.2..0.2);
        let b: f64 = cx + rng.gen_range(-0.2..0.2);
        writeln!(ef, "{a:.6},{b:.6}").unwrap();
        writeln!(lf, r#"{{"id":{i},"y":{cls}}}"#).unwrap();
    }
    let out = run(&[
        "eval",
        "--embeddings", emb.to_str().unwrap(),
        "--labels", labels.to_str().unwrap(),
        "--task", "classification",
        "--outputs", "2",
        "--method", "knn",
        "--folds", "5",
        "--k-grid", "1,3,5",
        "--seed", "9",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let acc = metrics["metrics"]["accuracy"]["mean"].as_f64().unwrap();
    assert!(acc > 0.9, "accuracy {acc}");
    assert_eq!(metrics["folds"].as_u64().unwrap(), 5);
}
