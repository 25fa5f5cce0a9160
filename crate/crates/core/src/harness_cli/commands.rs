use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiments::{run_experiment, Check, ExperimentOutcome, EXPERIMENTS};
use super::lab::Lab;
use super::manifest::RunManifest;
use super::plot::{emit_line_chart, LineChart, Series};
use super::ExperimentConfig;
use crate::audio_dsp::detect_onsets;
use crate::diffcore::sptn;
use crate::error::{Error, Result};
use crate::sampler::{block_probe_csv, sample, sample_offsync, skip_block_sweep, write_sample};
use crate::sync_metrics::{
    av_align, cyclesync, motion_peaks_strided, ScoreMode, ScoreRow, SweepConfig, SyncReport,
};
use crate::synth_world::{gen_dataset, Clip, LatentSequence, FRAME_RATE_HZ};
use crate::toy_model::{loss_curve_csv, train, Checkpoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STAGE: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub w_audio: Option<f64>,
    pub w_text: Option<f64>,
    /// Training steps.
    pub steps: Option<usize>,
    pub delta_ms: Option<f64>,
    pub mode: Option<ScoreMode>,
    pub backend: Option<String>,
}

/// Loads `path` (or the defaults when absent), applies `ov` and validates.
/// Without a config file the seed must come from the command line.
pub fn resolve_config(path: Option<&Path>, ov: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            if ov.seed.is_none() {
                return Err(Error::Usage("a seed is required: pass --seed or a --config file".into()));
            }
            ExperimentConfig::default()
        }
    };
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(o) = &ov.out {
        cfg.out_dir = o.clone();
    }
    if let Some(w) = ov.w_audio {
        cfg.guidance.w_audio = w;
    }
    if let Some(w) = ov.w_text {
        cfg.guidance.w_text = w;
    }
    if let Some(s) = ov.steps {
        cfg.train.steps = s;
    }
    if let Some(d) = ov.delta_ms {
        cfg.metric.delta_s = d / 1000.0;
    }
    if let Some(m) = ov.mode {
        cfg.metric.mode = m;
    }
    if let Some(b) = &ov.backend {
        cfg.metric.backend = b.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Result of one subcommand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandReport {
    pub artifacts: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl CommandReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_ACCEPTANCE
        }
    }
}

pub fn exit_code(result: &Result<CommandReport>) -> i32 {
    match result {
        Ok(r) => r.exit_code(),
        Err(Error::Usage(_)) => EXIT_USAGE,
        Err(_) => EXIT_STAGE,
    }
}

/// Runs `stage` and records its status in `manifest`; the manifest is
/// written on failure as well so partial runs stay inspectable.
fn staged<T>(
    manifest: &mut RunManifest,
    root: &Path,
    stage: &str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    match f() {
        Ok(v) => {
            manifest.record(stage, Ok(String::new()));
            Ok(v)
        }
        Err(e) => {
            manifest.record(stage, Err(e.to_string()));
            manifest.finish();
            let _ = manifest.write(root);
            Err(match e {
                Error::Usage(_) | Error::Stage { .. } => e,
                e => e.in_stage(stage),
            })
        }
    }
}

fn finish(mut manifest: RunManifest, root: &Path, report: CommandReport) -> Result<CommandReport> {
    manifest.add_artifacts(root, &report.artifacts);
    manifest.finish();
    manifest.write(root)?;
    Ok(report)
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<CommandReport> {
    let root = cfg.out_dir.clone();
    let mut manifest = RunManifest::start(cfg)?;
    let dir = root.join("dataset");
    let rows = staged(&mut manifest, &root, "synth", || gen_dataset(&cfg.dataset, &dir))?;
    let mut artifacts = vec![dir.join(crate::synth_world::MANIFEST_FILE)];
    for r in &rows {
        for f in [&r.wav, &r.latents, &r.features, &r.script] {
            artifacts.push(dir.join(f));
        }
    }
    finish(manifest, &root, CommandReport { artifacts, checks: Vec::new() })
}

/// Trains one model with seed `cfg.seed` and writes `train/model.ckpt`,
/// `train/loss.csv` and `train/loss.svg`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<CommandReport> {
    let root = cfg.out_dir.clone();
    let mut manifest = RunManifest::start(cfg)?;
    let mut lab = Lab::new(cfg.clone())?;
    let clips = staged(&mut manifest, &root, "synth", || lab.train_clips())?;
    let params = cfg.train_for(0);
    let out = staged(&mut manifest, &root, "train", || train(&cfg.model, &clips, &params))?;
    let dir = root.join("train");
    std::fs::create_dir_all(&dir)?;
    let ckpt = dir.join("model.ckpt");
    out.checkpoint.save(&ckpt)?;
    let csv = dir.join("loss.csv");
    std::fs::write(&csv, loss_curve_csv(&out.curve))?;
    let svg = dir.join("loss.svg");
    let mut artifacts = vec![ckpt, csv];
    if !out.curve.is_empty() {
        let chart = LineChart {
            title: "Training loss".into(),
            x_label: "step".into(),
            y_label: "loss".into(),
            series: vec![Series {
                label: format!("seed {}", params.seed),
                points: out.curve.iter().map(|r| (r.step as f64, r.loss)).collect(),
            }],
        };
        emit_line_chart(&chart, &svg)?;
        artifacts.push(svg);
    }
    finish(manifest, &root, CommandReport { artifacts, checks: Vec::new() })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleOptions {
    /// Bypass the audio layers (off-sync model).
    pub offsync: bool,
    /// Blocks skipped in every sample.
    pub skip_blocks: Vec<usize>,
    /// Also write block-skip probes of the first clip.
    pub probe: bool,
}

/// Samples the held-out clips from `checkpoint` into `samples/`.
pub fn cmd_sample(cfg: &ExperimentConfig, checkpoint: &Path, opts: &SampleOptions) -> Result<CommandReport> {
    if !checkpoint.is_file() {
        return Err(Error::Usage(format!("checkpoint {} not found", checkpoint.display())));
    }
    let root = cfg.out_dir.clone();
    let mut manifest = RunManifest::start(cfg)?;
    let ckpt = staged(&mut manifest, &root, "load", || Checkpoint::load(checkpoint))?;
    let model = ckpt.model()?;
    if let Some(&b) = opts.skip_blocks.iter().find(|&&b| b >= model.config.n_blocks) {
        return Err(Error::Usage(format!(
            "--skip-block {b} out of range 0..{}",
            model.config.n_blocks
        )));
    }
    let mut lab = Lab::new(cfg.clone())?;
    let clips = staged(&mut manifest, &root, "synth", || lab.eval_clips())?;
    let dir = root.join("samples");
    std::fs::create_dir_all(&dir)?;
    let lab = &lab;
    let written: Vec<Vec<PathBuf>> = staged(&mut manifest, &root, "sample", || {
        clips
            .par_iter()
            .map(|clip| {
                let mut req = lab.request(clip, cfg.seed, cfg.guidance.clone());
                req.skip_blocks = opts.skip_blocks.clone();
                let s = if opts.offsync {
                    sample_offsync(&model, &req)
                } else {
                    sample(&model, &req)
                }
                .map_err(|e| e.in_stage(format!("sample {}", clip.id)))?;
                write_sample(&dir, &clip.id, &req, &s)?;
                Ok(vec![dir.join(format!("{}.sptn", clip.id)), dir.join(format!("{}.json", clip.id))])
            })
            .collect()
    })?;
    let mut artifacts: Vec<PathBuf> = written.into_iter().flatten().collect();
    if opts.probe {
        let req = lab.request(&clips[0], cfg.seed, cfg.guidance.clone());
        let rows = staged(&mut manifest, &root, "probe", || skip_block_sweep(&model, &req))?;
        let p = dir.join("block_probes.csv");
        std::fs::write(&p, block_probe_csv(&rows))?;
        artifacts.push(p);
    }
    finish(manifest, &root, CommandReport { artifacts, checks: Vec::new() })
}

fn score_video(clip_id: &str, audio: &crate::audio_dsp::Waveform, video: &LatentSequence, lab: &Lab) -> Result<Vec<ScoreRow>> {
    let in_clip = |e: Error| Error::Backend {
        clip: clip_id.to_string(),
        msg: e.to_string(),
    };
    let cs = cyclesync(audio, video, lab.backend(), &lab.cfg.metric.cyclesync()).map_err(in_clip)?;
    let stride = SweepConfig::default().av_stride;
    let motion = motion_peaks_strided(video, stride).map_err(in_clip)?;
    let audio_peaks = detect_onsets(audio).map_err(in_clip)?;
    let av = av_align(&audio_peaks, &motion, stride as f64 / video.frame_rate_hz())?;
    Ok(vec![
        ScoreRow {
            clip_id: clip_id.to_string(),
            metric: "cyclesync".into(),
            delay_s: 0.0,
            score: cs.score,
            n_peaks_ref: cs.reference.len(),
            n_peaks_rec: cs.reconstructed.len(),
        },
        ScoreRow {
            clip_id: clip_id.to_string(),
            metric: "av_align".into(),
            delay_s: 0.0,
            score: av,
            n_peaks_ref: audio_peaks.len(),
            n_peaks_rec: motion.len(),
        },
    ])
}

/// Scores the sampled videos in `samples` (files `<clip id>.sptn`) against
/// the held-out audio, or the held-out clips' own videos when `samples` is
/// `None`. Writes `eval/scores.csv` and `eval/aggregates.json`.
pub fn cmd_eval(cfg: &ExperimentConfig, samples: Option<&Path>) -> Result<(CommandReport, SyncReport)> {
    if let Some(dir) = samples {
        if !dir.is_dir() {
            return Err(Error::Usage(format!("samples directory {} not found", dir.display())));
        }
    }
    let root = cfg.out_dir.clone();
    let mut manifest = RunManifest::start(cfg)?;
    let mut lab = Lab::new(cfg.clone())?;
    let clips: std::sync::Arc<Vec<Clip>> = staged(&mut manifest, &root, "synth", || lab.eval_clips())?;
    let lab = &lab;
    let rows: Vec<Vec<ScoreRow>> = staged(&mut manifest, &root, "eval", || {
        clips
            .par_iter()
            .map(|clip| {
                let video = match samples {
                    Some(dir) => {
                        let path = dir.join(format!("{}.sptn", clip.id));
                        let t = sptn::load(&path).map_err(|e| Error::Backend {
                            clip: clip.id.clone(),
                            msg: format!("{}: {e}", path.display()),
                        })?;
                        LatentSequence::new(t, FRAME_RATE_HZ)?
                    }
                    None => clip.latents.clone(),
                };
                score_video(&clip.id, &clip.audio, &video, lab)
            })
            .collect()
    })?;
    let report = SyncReport::from_rows(rows.into_iter().flatten().collect());
    let dir = root.join("eval");
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join("scores.csv");
    report.write_csv(&csv)?;
    let agg = dir.join("aggregates.json");
    std::fs::write(&agg, serde_json::to_string_pretty(&report.aggregates_json())? + "\n")?;
    let out = finish(
        manifest,
        &root,
        CommandReport {
            artifacts: vec![csv, agg],
            checks: Vec::new(),
        },
    )?;
    Ok((out, report))
}

/// Runs the named experiments (all of them for `["all"]`) in one lab so
/// trained models are shared, then writes the run manifest.
pub fn cmd_experiment(cfg: &ExperimentConfig, names: &[String]) -> Result<(CommandReport, Vec<ExperimentOutcome>)> {
    let names: Vec<String> = if names.iter().any(|n| n == "all") {
        EXPERIMENTS.iter().map(|s| s.to_string()).collect()
    } else {
        names.to_vec()
    };
    if names.is_empty() {
        return Err(Error::Usage(format!(
            "name an experiment: {} or all",
            EXPERIMENTS.join(", ")
        )));
    }
    if let Some(bad) = names.iter().find(|n| !EXPERIMENTS.contains(&n.as_str())) {
        return Err(Error::Usage(format!(
            "unknown experiment `{bad}`; valid names: {}",
            EXPERIMENTS.join(", ")
        )));
    }
    let root = cfg.out_dir.clone();
    std::fs::create_dir_all(&root)?;
    // out_dir is left out so the file is identical across run directories
    let canonical: serde_json::Value = serde_json::from_str(&cfg.canonical_json()?)?;
    std::fs::write(root.join("config.json"), serde_json::to_string_pretty(&canonical)? + "\n")?;
    let mut manifest = RunManifest::start(cfg)?;
    let mut lab = Lab::new(cfg.clone())?;
    let mut outcomes = Vec::new();
    let mut report = CommandReport {
        artifacts: vec![root.join("config.json")],
        checks: Vec::new(),
    };
    for name in &names {
        let out = staged(&mut manifest, &root, name, || run_experiment(&mut lab, name))?;
        report.artifacts.extend(out.artifacts.iter().cloned());
        report.checks.extend(out.checks.iter().map(|c| Check {
            name: format!("{name}/{}", c.name),
            ..c.clone()
        }));
        outcomes.push(out);
    }
    let report = finish(manifest, &root, report)?;
    Ok((report, outcomes))
}

/// Collects the `checks.json` of every experiment under `root` into
/// `report.md`.
pub fn cmd_report(root: &Path) -> Result<CommandReport> {
    if !root.is_dir() {
        return Err(Error::Usage(format!("run directory {} not found", root.display())));
    }
    let mut md = String::from("# Experiment report\n\n");
    if let Ok(m) = RunManifest::load(root) {
        let _ = writeln!(md, "config hash: `{}`, tool version {}\n", m.config_hash, m.tool_version);
    }
    let mut checks = Vec::new();
    let mut found = 0;
    for name in EXPERIMENTS {
        let path = root.join(name).join("checks.json");
        let Ok(text) = std::fs::read_to_string(&path) else { continue };
        found += 1;
        let list: Vec<Check> = serde_json::from_str(&text)?;
        let _ = writeln!(md, "## {name}\n");
        for c in list {
            let _ = writeln!(md, "- {} `{}`: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            checks.push(Check {
                name: format!("{name}/{}", c.name),
                ..c
            });
        }
        md.push('\n');
    }
    if found == 0 {
        return Err(Error::Usage(format!("no experiment results under {}", root.display())));
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    let _ = writeln!(md, "{passed}/{} checks passed.", checks.len());
    let path = root.join("report.md");
    std::fs::write(&path, md)?;
    Ok(CommandReport {
        artifacts: vec![path],
        checks,
    })
}
