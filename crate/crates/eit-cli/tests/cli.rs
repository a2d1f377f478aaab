//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn eit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eit"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawning the binary");
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).expect("reading JSON artifact")).expect("parsing JSON")
}

fn gen_tiny_dataset(dir: &Path, seed: u64) -> PathBuf {
    let data = dir.join("tiny.jsonl");
    run_ok(eit()
        .args(["gen-dataset", "--n-per-class", "5", "--seed"])
        .arg(seed.to_string())
        .arg("--out")
        .arg(&data));
    data
}

#[test]
fn help_lists_every_subcommand() {
    let out = run_ok(eit().arg("--help"));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in [
        "gen-dataset",
        "train",
        "eval",
        "predict",
        "forward-solve",
        "reconstruct",
        "render",
    ] {
        assert!(text.contains(name), "help does not mention {name}");
    }
}

#[test]
fn usage_errors_exit_with_code_2() {
    let checks: [&[&str]; 3] = [
        &["gen-dataset", "--bogus"],
        &["train"],
        &["train", "--data", "x.jsonl", "--task", "sizes", "--out", "x.json"],
    ];
    for args in checks {
        let out = eit().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "args {args:?}");
    }
}

#[test]
fn missing_input_is_a_diagnostic_error() {
    let dir = TempDir::new().unwrap();
    let out = eit()
        .args(["train", "--data"])
        .arg(dir.path().join("absent.jsonl"))
        .args(["--task", "count", "--out"])
        .arg(dir.path().join("x.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn dataset_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("a/data.jsonl");
    let second = dir.path().join("b/data.jsonl");
    fs::create_dir_all(first.parent().unwrap()).unwrap();
    fs::create_dir_all(second.parent().unwrap()).unwrap();
    for out in [&first, &second] {
        run_ok(eit()
            .args(["gen-dataset", "--n-per-class", "1", "--seed", "7", "--out"])
            .arg(out));
    }
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    assert_eq!(
        fs::read(first.with_file_name("data.jsonl.manifest.json")).unwrap(),
        fs::read(second.with_file_name("data.jsonl.manifest.json")).unwrap(),
    );
    let run: Value = read_json(&first.with_file_name("data.jsonl.run.json"));
    assert_eq!(run["command"], "gen-dataset");
    assert_eq!(run["seeds"]["master"], 7);
    assert!(run["fingerprints"]["jacobian"].is_string());
}

#[test]
fn model_pipeline_end_to_end() {
    let dir = TempDir::new().unwrap();
    let data = gen_tiny_dataset(dir.path(), 3);
    let input_bytes = fs::read(&data).unwrap();

    let mut nets = Vec::new();
    for task in ["count", "radius", "center"] {
        let ckpt = dir.path().join(format!("{task}.ckpt.json"));
        run_ok(eit()
            .args(["train", "--data"])
            .arg(&data)
            .args(["--task", task, "--epochs", "3", "--batch-size", "4", "--out"])
            .arg(&ckpt));
        assert!(ckpt.with_file_name(format!("{task}.ckpt.json.history.json")).exists());
        nets.push(ckpt);
    }

    let report_path = dir.path().join("eval.json");
    run_ok(eit()
        .args(["eval", "--data"])
        .arg(&data)
        .arg("--checkpoint")
        .arg(&nets[0])
        .arg("--out")
        .arg(&report_path));
    let report = read_json(&report_path);
    assert_eq!(report["task"], "count");
    assert_eq!(report["split"], "test");
    assert_eq!(report["n_records"], 3);
    let acc = report["classifier"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    // Same invocation, same bytes: the metrics report carries no clock.
    let before = fs::read(&report_path).unwrap();
    run_ok(eit()
        .args(["eval", "--data"])
        .arg(&data)
        .arg("--checkpoint")
        .arg(&nets[0])
        .arg("--out")
        .arg(&report_path));
    assert_eq!(before, fs::read(&report_path).unwrap());

    let radius_report = dir.path().join("eval-radius.json");
    run_ok(eit()
        .args(["eval", "--data"])
        .arg(&data)
        .arg("--checkpoint")
        .arg(&nets[1])
        .arg("--out")
        .arg(&radius_report));
    let report = read_json(&radius_report);
    assert!(report["regressor"]["mean_deviation"].as_f64().unwrap() >= 0.0);

    let pred_path = dir.path().join("pred.json");
    run_ok(eit()
        .args(["predict", "--data"])
        .arg(&data)
        .arg("--count-net")
        .arg(&nets[0])
        .arg("--radius-net")
        .arg(&nets[1])
        .arg("--center-net")
        .arg(&nets[2])
        .arg("--out")
        .arg(&pred_path));
    let pred = read_json(&pred_path);
    assert_eq!(pred["n_records"], 15);
    for rec in pred["records"].as_array().unwrap() {
        let k = rec["predicted_count"].as_u64().unwrap() as usize;
        assert!((1..=3).contains(&k));
        assert_eq!(rec["nn_radii"].as_array().unwrap().len(), k);
        assert_eq!(rec["nn_centers"].as_array().unwrap().len(), k);
        assert!(rec["kmeans_centers"].is_array() || rec["kmeans_error"].is_string());
    }

    // Reading commands leave their inputs untouched.
    assert_eq!(input_bytes, fs::read(&data).unwrap());
}

#[test]
fn physics_chain_localizes_a_hole() {
    let dir = TempDir::new().unwrap();
    let pair = dir.path().join("pair.json");
    let out = run_ok(eit()
        .args(["forward-solve", "--hole", "0.3,0.6,0.04", "--seed", "4", "--out"])
        .arg(&pair));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pristine (V)"));
    assert_eq!(
        stdout.lines().filter(|l| l.trim_start().chars().next().is_some_and(|c| c.is_ascii_digit())).count(),
        208,
        "expected one row per measurement"
    );

    let delta_path = dir.path().join("delta.json");
    run_ok(eit()
        .args(["reconstruct", "--pair"])
        .arg(&pair)
        .arg("--out")
        .arg(&delta_path));
    let delta = read_json(&delta_path);
    assert_eq!(delta["coarse_elements"], 784);
    let values: Vec<f64> = delta["delta_sigma"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(values.iter().all(|&v| v <= 0.0));

    let mesh = eit::mesh::rect::reconstruction_mesh(&eit::SimConfig::default()).unwrap();
    let deepest = (0..values.len())
        .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap())
        .unwrap();
    let c = mesh.element_centroids()[deepest];
    let dist = ((c.x - 0.3).powi(2) + (c.y - 0.6).powi(2)).sqrt();
    assert!(dist < 0.1, "deepest element at ({}, {}), {dist} m from the hole", c.x, c.y);

    let png = dir.path().join("map.png");
    run_ok(eit().args(["render", "--input"]).arg(&delta_path).arg("--out").arg(&png));
    let bytes = fs::read(&png).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");

    let scale = read_json(&dir.path().join("map.png.scale.json"));
    assert_eq!(scale["side"], 512);
    assert!(scale["deepest"].as_f64().unwrap() < 0.0);
    let dx = scale["darkest_pixel"]["x"].as_f64().unwrap() - 0.3;
    let dy = scale["darkest_pixel"]["y"].as_f64().unwrap() - 0.6;
    assert!(dx.hypot(dy) < 0.1);

    run_ok(eit().args(["render", "--input"]).arg(&delta_path).arg("--out").arg(&png));
    assert_eq!(bytes, fs::read(&png).unwrap(), "renders must be byte-identical");
}

#[test]
fn undamaged_cycle_renders_uniform_background() {
    let dir = TempDir::new().unwrap();
    let pair = dir.path().join("pair.json");
    run_ok(eit().args(["forward-solve", "--seed", "9", "--out"]).arg(&pair));

    let delta_path = dir.path().join("delta.json");
    run_ok(eit()
        .args(["reconstruct", "--pair"])
        .arg(&pair)
        .arg("--out")
        .arg(&delta_path));
    let delta = read_json(&delta_path);
    assert!(delta["delta_sigma"]
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v.as_f64().unwrap() == 0.0));

    let png = dir.path().join("flat.png");
    run_ok(eit().args(["render", "--input"]).arg(&delta_path).arg("--out").arg(&png));
    let scale = read_json(&dir.path().join("flat.png.scale.json"));
    assert_eq!(scale["deepest"], 0.0);
    assert!(scale["darkest_pixel"].is_null());

    let img = image::open(&png).unwrap().into_luma8();
    assert!(img.pixels().all(|p| p.0[0] == u8::MAX));
}

#[test]
fn render_reads_dataset_records() {
    let dir = TempDir::new().unwrap();
    let data = gen_tiny_dataset(dir.path(), 11);
    let png = dir.path().join("rec0.png");
    run_ok(eit()
        .args(["render", "--data"])
        .arg(&data)
        .args(["--index", "0", "--side", "96", "--out"])
        .arg(&png));
    let scale = read_json(&dir.path().join("rec0.png.scale.json"));
    assert_eq!(scale["side"], 96);

    let out = eit()
        .args(["render", "--data"])
        .arg(&data)
        .args(["--index", "99", "--out"])
        .arg(dir.path().join("x.png"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "out-of-range index is a diagnostic error");
}
