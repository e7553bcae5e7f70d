use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bvnc::compress::CompressedModel;
use bvnc::io::{load_model, CompressionMethod, CompressionOptions, RunConfig};
use bvnc::pipeline::compress_model;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn bvnc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvnc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn toy_config(dir: &Path) -> PathBuf {
    let f = fixtures();
    let text = format!(
        r#"architecture = [16, 8, 3]

[schedule]
pretrain_epochs = 5
phase1_epochs = 4
phase2_epochs = 3
batch_size = 10
pretrain_lr = 0.01

[data]
dir = "{}"
train_images = "toy-train-images.idx"
train_labels = "toy-train-labels.idx"
test_images = "toy-test-images.idx"
test_labels = "toy-test-labels.idx"

[sweep]
tau2_values = [0.0, 0.02]
"#,
        f.display()
    );
    let p = dir.join("toy.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn evaluate_golden_model() {
    let f = fixtures();
    let images = f.join("toy-test-images.idx");
    let labels = f.join("toy-test-labels.idx");
    let o = bvnc(&["evaluate", "--model", s(&f.join("toy-model.bvnm")), "--images", s(&images), "--labels", s(&labels)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "accuracy 0.9500");
    let o = bvnc(&["evaluate", "--model", s(&f.join("toy-model.bvnc")), "--images", s(&images), "--labels", s(&labels)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "accuracy 0.9333");
}

#[test]
fn golden_container_is_reproduced() {
    let f = fixtures();
    let (net, prior) = load_model(f.join("toy-model.bvnm")).unwrap();
    let out = compress_model(&net, prior.as_ref(), &CompressionOptions::default(), None).unwrap();
    assert_eq!(out.bytes, std::fs::read(f.join("toy-model.bvnc")).unwrap());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = bvnc(&["evaluate", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let o = bvnc(&[]);
    assert_eq!(o.status.code(), Some(1));
    let o = bvnc(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_two() {
    let o = bvnc(&["evaluate", "--model", "/nonexistent/model.bvnm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error"));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[schedule]\npi0 = 1.5\n").unwrap();
    let out = dir.path().join("m.bvnm");
    let o = bvnc(&["--config", s(&cfg), "pretrain", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pi0"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn baseline_compression_uses_reference_defaults() {
    let defaults = RunConfig::default().compression;
    assert_eq!(defaults.threshold, 0.95);
    assert_eq!(defaults.baseline_components, 64);

    let f = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let out = dir.path().join("vd.bvnc");
    let o = bvnc(&[
        "--config",
        s(&cfg),
        "compress",
        "--model",
        s(&f.join("toy-model.bvnm")),
        "--out",
        s(&out),
        "--method",
        "vd-baseline",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("compression ratio"));

    let (net, _) = load_model(f.join("toy-model.bvnm")).unwrap();
    let opts = CompressionOptions {
        method: CompressionMethod::VdBaseline,
        threshold: 0.95,
        baseline_components: 64,
        offset_bits: 5,
    };
    let expected = compress_model(&net, None, &opts, None).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), expected.bytes);
}

#[test]
fn report_prints_text_then_json() {
    let f = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let o = bvnc(&["--config", s(&cfg), "report", "--container", s(&f.join("toy-model.bvnc"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let json_start = text.find('{').expect("json follows the table");
    assert!(text[..json_start].contains("compression ratio"));
    let v: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    assert_eq!(v["original_bits"], 32 * (16 * 8 + 8 + 8 * 3 + 3));
    assert!((v["accuracy_after"].as_f64().unwrap() - 56.0 / 60.0).abs() < 1e-12);
    let c = CompressedModel::load(&f.join("toy-model.bvnc")).unwrap();
    assert_eq!(c.layers.len(), 2);
}

#[test]
fn training_commands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let pre = dir.path().join("pre.bvnm");
    let o = bvnc(&["--config", s(&cfg), "pretrain", "--out", s(&pre)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut runs = Vec::new();
    for i in 0..2 {
        let m = dir.path().join(format!("sws{i}.bvnm"));
        let c = dir.path().join(format!("sws{i}.bvnc"));
        let r = dir.path().join(format!("sws{i}.json"));
        let o = bvnc(&["--config", s(&cfg), "train-vdsws", "--init", s(&pre), "--out", s(&m)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = bvnc(&["--config", s(&cfg), "compress", "--model", s(&m), "--out", s(&c), "--report", s(&r)]);
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push([m, c, r].map(|p| std::fs::read(p).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);

    let vd = dir.path().join("vd.bvnm");
    let o = bvnc(&["--config", s(&cfg), "--seed", "3", "train-vd", "--out", s(&vd)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (net, prior) = load_model(&vd).unwrap();
    assert!(prior.is_none());
    assert_eq!(net.dims(), vec![16, 8, 3]);
}

#[test]
fn sweep_emits_fixed_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let o = bvnc(&["--config", s(&cfg), "sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau2,accuracy,sparsity_pct,cr");
    assert_eq!(lines.len(), 3);
    for (line, tau2) in lines[1..].iter().zip(["0", "0.02"]) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        assert_eq!(fields[0], tau2);
        for v in &fields[1..] {
            assert!(v.parse::<f64>().unwrap().is_finite());
        }
    }
    let csv = dir.path().join("sweep.csv");
    let o = bvnc(&["--config", s(&cfg), "sweep", "--tau2", "0.01", "--out", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let written = std::fs::read_to_string(&csv).unwrap();
    assert!(written.starts_with("tau2,accuracy,sparsity_pct,cr\n0.01,"));
}
