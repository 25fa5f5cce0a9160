use std::path::Path;
use std::process::Command;

use synclab::harness_cli::*;
use synclab::sync_metrics::ScoreMode;

const TINY: &str = r#"{"schema":"synclab.experiment/1","seed":3,"n_seeds":1,
  "dataset":{"n_clips":4},"eval_dataset":{"seed":1007,"n_clips":3},
  "sweep_dataset":{"n_clips":4,"script":{"zero_lag":true}},
  "model":{"n_blocks":2,"d_model":8,"audio_blocks":[1]},
  "train":{"steps":20},"guidance":{"steps":4}}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_synclab"));
    c.env_remove("SYNCLAB_THREADS");
    c
}

fn write_tiny(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("tiny.json");
    std::fs::write(&p, TINY).unwrap();
    p
}

fn code(c: &mut Command) -> i32 {
    c.output().unwrap().status.code().unwrap()
}

#[test]
fn missing_seed_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(bin().args(["train", "--out"]).arg(dir.path())), EXIT_USAGE);
    assert_eq!(code(bin().arg("bogus")), EXIT_USAGE);
    assert_eq!(code(bin().args(["--seed", "1", "--mode", "other", "train"])), EXIT_USAGE);
}

#[test]
fn unknown_experiment_lists_valid_names() {
    let out = bin().args(["experiment", "E7", "--seed", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in EXPERIMENTS {
        assert!(err.contains(name), "{err}");
    }
    let cfg = ExperimentConfig::default();
    let mut lab = Lab::new(cfg).unwrap();
    assert!(matches!(run_experiment(&mut lab, "nope"), Err(synclab::Error::Usage(_))));
}

#[test]
fn bad_thread_count_is_usage_error() {
    let mut c = bin();
    c.env("SYNCLAB_THREADS", "zero").args(["train", "--seed", "1"]);
    assert_eq!(code(&mut c), EXIT_USAGE);
}

#[test]
fn failing_backend_is_stage_failure_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out = dir.path().join("run");
    let status = bin()
        .args(["eval", "--backend", "external:/nonexistent/v2a"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_STAGE));
    assert!(String::from_utf8_lossy(&status.stderr).contains("eval"));
    let m = RunManifest::load(&out).unwrap();
    let last = m.stages.last().unwrap();
    assert_eq!((last.stage.as_str(), last.state), ("eval", StageState::Failed));
}

#[test]
fn train_sample_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out = dir.path().join("run");
    let run = |args: &[&str]| {
        let mut c = bin();
        c.args(args).arg("--config").arg(&cfg).arg("--out").arg(&out);
        code(&mut c)
    };
    assert_eq!(run(&["synth"]), EXIT_OK);
    assert!(out.join("dataset/manifest.jsonl").is_file());
    assert_eq!(run(&["train"]), EXIT_OK);
    let ckpt = out.join("train/model.ckpt");
    assert!(ckpt.is_file() && out.join("train/loss.svg").is_file());
    let csv = std::fs::read_to_string(out.join("train/loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    let ck = ckpt.to_str().unwrap();
    assert_eq!(run(&["sample", "--checkpoint", ck, "--probe", "--w-audio", "1"]), EXIT_OK);
    for i in 0..3 {
        assert!(out.join(format!("samples/clip_{i:04}.sptn")).is_file());
    }
    let probes = std::fs::read_to_string(out.join("samples/block_probes.csv")).unwrap();
    assert_eq!(probes.lines().count(), 3);
    assert_eq!(run(&["sample", "--checkpoint", ck, "--skip-block", "5"]), EXIT_USAGE);
    assert_eq!(run(&["sample", "--checkpoint", "/no/such.ckpt"]), EXIT_USAGE);
    let samples = out.join("samples");
    assert_eq!(run(&["eval", "--samples", samples.to_str().unwrap()]), EXIT_OK);
    let scores = std::fs::read_to_string(out.join("eval/scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 2 * 3);
    let m = RunManifest::load(&out).unwrap();
    assert_eq!(m.config.guidance.steps, 4);
    assert!(m.stages.iter().all(|s| s.state == StageState::Ok));
    assert!(m.finished_unix_s.is_some());
}

#[test]
fn experiment_writes_bundle_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out = dir.path().join("run");
    let status = bin()
        .args(["experiment", "E3_asg_sweep", "E1_delay_sweep"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert!(matches!(status.code(), Some(EXIT_OK) | Some(EXIT_ACCEPTANCE)));
    for f in ["summary.md", "checks.json", "scores.csv", "summary.csv", "cyclesync.svg", "mae.svg"] {
        assert!(out.join("E3_asg_sweep").join(f).is_file(), "{f}");
    }
    let table = std::fs::read_to_string(out.join("E3_asg_sweep/summary.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4);
    let checks: Vec<Check> =
        serde_json::from_str(&std::fs::read_to_string(out.join("E3_asg_sweep/checks.json")).unwrap()).unwrap();
    let w0 = checks.iter().find(|c| c.name == "w0_row_equals_no_asg_sampling").unwrap();
    assert!(w0.passed, "{}", w0.detail);
    assert!(out.join("E1_delay_sweep/relative.svg").is_file());
    assert!(out.join("cache").is_dir());

    let report = bin().arg("report").arg(&out).output().unwrap();
    assert!(matches!(report.status.code(), Some(EXIT_OK) | Some(EXIT_ACCEPTANCE)));
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("## E1_delay_sweep") && md.contains("## E3_asg_sweep"));
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(bin().arg("report").arg(empty.path())), EXIT_USAGE);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_tiny(dir.path());
    let ov = Overrides {
        seed: Some(9),
        w_audio: Some(0.5),
        w_text: Some(1.5),
        steps: Some(7),
        delta_ms: Some(80.0),
        mode: Some(ScoreMode::Paper),
        backend: Some("external:cat".into()),
        out: Some(dir.path().join("x")),
    };
    let cfg = resolve_config(Some(&path), &ov).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!((cfg.guidance.w_audio, cfg.guidance.w_text), (0.5, 1.5));
    assert_eq!(cfg.train.steps, 7);
    assert!((cfg.metric.delta_s - 0.08).abs() < 1e-15);
    assert_eq!(cfg.metric.mode, ScoreMode::Paper);
    assert_eq!(cfg.metric.backend, "external:cat");
    let plain = resolve_config(Some(&path), &Overrides::default()).unwrap();
    assert_eq!(plain.seed, 3);
    assert_ne!(plain.hash().unwrap(), cfg.hash().unwrap());
    assert!(resolve_config(None, &Overrides::default()).is_err());
}

#[test]
fn config_hash_ignores_field_order() {
    let a = ExperimentConfig::from_json(TINY).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(TINY).unwrap();
    let obj = v.as_object_mut().unwrap();
    let keys: Vec<String> = obj.keys().rev().cloned().collect();
    let mut rev = serde_json::Map::new();
    for k in keys {
        rev.insert(k.clone(), obj[&k].clone());
    }
    let b = ExperimentConfig::from_json(&serde_json::Value::Object(rev).to_string()).unwrap();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    assert_eq!(a.hash().unwrap().len(), 64);
}

#[test]
fn plots_are_deterministic_and_labeled() {
    let dir = tempfile::tempdir().unwrap();
    let chart = LineChart {
        title: "t".into(),
        x_label: "delay (s)".into(),
        y_label: "relative (%)".into(),
        series: vec![Series {
            label: "one".into(),
            points: vec![(0.0, 100.0)],
        }],
    };
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    emit_line_chart(&chart, &a).unwrap();
    emit_line_chart(&chart, &b).unwrap();
    let (sa, sb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(sa, sb);
    let text = String::from_utf8(sa).unwrap();
    assert!(text.contains("delay (s)") && text.contains("relative (%)"));
    assert!(emit_line_chart(&chart, Path::new("/nonexistent/dir/x.svg")).is_err());
    let empty = LineChart { series: vec![], ..chart };
    assert!(line_chart_svg(&empty).is_err());
}

#[test]
fn seed_mean_averages_per_seed_means() {
    let (m, ci) = seed_mean(&[vec![1.0, 3.0], vec![4.0]]);
    assert_eq!(m, 3.0);
    assert!(ci > 0.0);
    assert_eq!(seed_mean(&[vec![2.0, 2.0]]), (2.0, 0.0));
}
