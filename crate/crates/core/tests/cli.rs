//! The `perturbex` binary: subcommands, outputs and exit codes.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn perturbex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perturbex")).args(args).output().expect("spawn perturbex")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Dataset plus a TOML config next to it; returns the config path.
fn setup(dir: &Path, extra: &str) -> PathBuf {
    common::blob_dataset(&dir.join("data"), 4);
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            r#"
manifest = "data/manifest.json"
output_dir = "out"
workers = 2

[backends.detector]
endpoint = "blob-detector"
[backends.segmenter]
endpoint = "blob-segmenter"
[backends.inpainter]
endpoint = "fill-inpainter"

[inpaint]
target_resolution = "native"

[[perturbations]]
type = "removal"

[[perturbations]]
type = "background"
environment = "beach"
{extra}
"#
        ),
    )
    .unwrap();
    config
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_names_the_wire_schema() {
    let o = perturbex(&["--version"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains(env!("CARGO_PKG_VERSION")) && text.contains("wire schema 1"), "{text}");
}

#[test]
fn run_writes_outputs_and_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), "");
    let o = perturbex(&["run", "--config", s(&config), "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["records.jsonl", "summary.json", "summary.csv", "timings.csv", "run_meta.json", "effective_config.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let effective: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(effective["seed"], 7);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("removal-segmentation: N=4 flips=4 FR=1.000"), "{stdout}");
}

#[test]
fn mask_mode_flag_overrides_every_spec() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), "");
    let o = perturbex(&["run", "--config", s(&config), "--mask-mode", "bbox", "--output-dir", s(&dir.path().join("bbox"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("bbox/summary.json")).unwrap();
    assert!(summary.contains("removal-bbox"), "{summary}");
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), "");
    assert_eq!(code(&perturbex(&["run", "--config", s(&config), "--tau", "1.5"])), 2);
    assert_eq!(code(&perturbex(&["run", "--config", "/no/such/config.toml"])), 2);
    assert_eq!(code(&perturbex(&["run", "--config", s(&config), "--workers", "0"])), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "manifest = 3").unwrap();
    assert_eq!(code(&perturbex(&["run", "--config", s(&bad)])), 2);
    assert_eq!(code(&perturbex(&["run"])), 2);
}

#[test]
fn unreachable_backend_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), "");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("endpoint = \"blob-detector\"", "endpoint = \"http://127.0.0.1:1\"\ntimeout_s = 0.5");
    std::fs::write(&config, text).unwrap();
    let o = perturbex(&["run", "--config", s(&config)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unreadable_manifest_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), "");
    std::fs::write(dir.path().join("data/manifest.json"), "{ not json").unwrap();
    let o = perturbex(&["run", "--config", s(&config)]);
    let c = code(&o);
    assert!(c == 2 || c == 4, "exit {c}: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn detect_writes_detections() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), "");
    let o = perturbex(&["detect", "--config", s(&config)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = std::fs::read_to_string(dir.path().join("out/detections.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4);
}

#[test]
fn sweep_runs_every_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), "\n[sweep]\nseed = [1, 2]\nguidance_scale = [7.5, 10]\n");
    let o = perturbex(&["sweep", "--config", s(&config)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let index: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/sweep/index.json")).unwrap()).unwrap();
    assert_eq!(index.as_array().unwrap().len(), 4);
    assert!(dir.path().join("out/sweep/guidance_scale=10_seed=2/summary.json").is_file());
}

#[test]
fn compare_mask_modes_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), "");
    let o = perturbex(&["compare-mask-modes", "--config", s(&config), "--no-replacement"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/compare/timing_report.json")).unwrap()).unwrap();
    assert!(report["removal"]["speedup"].is_number());
    assert!(report["replacement"].is_null());
}

#[test]
fn report_renders_gallery_and_imports_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), "");
    assert_eq!(code(&perturbex(&["run", "--config", s(&config)])), 0);
    let run = dir.path().join("out");
    let o = perturbex(&["report", "--run", s(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let index = run.join("gallery/index.html");
    let first = std::fs::read(&index).unwrap();
    assert_eq!(code(&perturbex(&["report", "--run", s(&run)])), 0);
    assert_eq!(std::fs::read(&index).unwrap(), first, "gallery is not reproducible");

    let records = std::fs::read_to_string(run.join("records.jsonl")).unwrap();
    let r: serde_json::Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    let csv = dir.path().join("ann.csv");
    std::fs::write(&csv, format!("image_id,spec_hash,plausibility\n{},{},plausible\n", r["image_id"].as_str().unwrap(), r["spec_hash"].as_str().unwrap())).unwrap();
    assert_eq!(code(&perturbex(&["report", "--run", s(&run), "--annotations", s(&csv)])), 0);
    assert!(std::fs::read_to_string(run.join("summary.json")).unwrap().contains("plausible"));

    std::fs::write(&csv, "image_id,spec_hash,plausibility\nnobody,000000000000,plausible\n").unwrap();
    let o = perturbex(&["report", "--run", s(&run), "--annotations", s(&csv)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn mock_serve_answers_health() {
    let server = common::ServeProcess::start(&["--inpainter", "texture-inpainter"]);
    let body: serde_json::Value = ureq::get(&format!("{}/health", server.url)).call().unwrap().into_json().unwrap();
    assert_eq!(body["status"], "ok");
    let o = perturbex(&["mock-serve", "--port", "0", "--detector", "no-such-detector"]);
    assert_eq!(code(&o), 2);
}
