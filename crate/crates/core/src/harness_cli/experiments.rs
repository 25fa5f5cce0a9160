use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::lab::{seed_mean, ClipScore, Lab, SampleMode, TrainedModel, Variant};
use super::plot::{emit_bar_chart, emit_line_chart, Bar, BarChart, LineChart, Series};
use crate::error::{Error, Result};
use crate::sampler::{block_probe_csv, sample, GuidanceConfig};
use crate::sync_metrics::{cyclesync, delay_sweep, SweepConfig, SweepMetric};
use crate::synth_world::generate_clips;
use crate::toy_model::{curve_windows, ModelConfig, TrainParams};

pub const EXPERIMENTS: [&str; 5] = [
    "E1_delay_sweep",
    "E2_loss_ablation",
    "E3_asg_sweep",
    "E4_rope_ablation",
    "E5_offsync",
];

/// One pass/fail flag of an experiment summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Aggregated scores of one sampled configuration across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub label: String,
    pub n_seeds: usize,
    pub n_samples: usize,
    pub cyclesync_mean: f64,
    pub cyclesync_ci95: f64,
    pub mae_mean_s: f64,
    pub mae_ci95_s: f64,
}

struct Arm {
    label: String,
    seeds: Vec<u64>,
    scores: Vec<Vec<ClipScore>>,
}

impl Arm {
    fn summary(&self) -> ArmSummary {
        let cs: Vec<Vec<f64>> = self.scores.iter().map(|s| s.iter().map(|c| c.cyclesync).collect()).collect();
        let mae: Vec<Vec<f64>> = self.scores.iter().map(|s| s.iter().map(|c| c.mae_s).collect()).collect();
        let (cm, cc) = seed_mean(&cs);
        let (mm, mc) = seed_mean(&mae);
        ArmSummary {
            label: self.label.clone(),
            n_seeds: self.scores.len(),
            n_samples: self.scores.iter().map(Vec::len).sum(),
            cyclesync_mean: cm,
            cyclesync_ci95: cc,
            mae_mean_s: mm,
            mae_ci95_s: mc,
        }
    }
}

fn arm(lab: &mut Lab, label: &str, variant: &Variant, mode: SampleMode) -> Result<Arm> {
    let models = lab.models(variant)?;
    let mut scores = Vec::with_capacity(models.len());
    for m in &models {
        scores.push(lab.scores(m, mode)?.as_ref().clone());
    }
    Ok(Arm {
        label: label.to_string(),
        seeds: models.iter().map(|m| m.seed).collect(),
        scores,
    })
}

fn scores_csv(arms: &[Arm]) -> String {
    let mut out = String::from("arm,seed,clip_id,cyclesync_x100,mae_ms,n_motion_peaks\n");
    for a in arms {
        for (seed, scores) in a.seeds.iter().zip(&a.scores) {
            for s in scores {
                let _ = writeln!(
                    out,
                    "{},{seed},{},{:.4},{:.3},{}",
                    a.label,
                    s.clip_id,
                    100.0 * s.cyclesync,
                    1000.0 * s.mae_s,
                    s.n_motion_peaks
                );
            }
        }
    }
    out
}

fn summary_csv(rows: &[ArmSummary]) -> String {
    let mut out = String::from("arm,n_seeds,n_samples,cyclesync_x100,cyclesync_ci95_x100,mae_ms,mae_ci95_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.3},{:.3}",
            r.label,
            r.n_seeds,
            r.n_samples,
            100.0 * r.cyclesync_mean,
            100.0 * r.cyclesync_ci95,
            1000.0 * r.mae_mean_s,
            1000.0 * r.mae_ci95_s
        );
    }
    out
}

fn summary_table(rows: &[ArmSummary]) -> String {
    let mut out = String::from("| arm | seeds | samples | CycleSync x100 | 95% CI | onset MAE (ms) | 95% CI |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.2} | {:.2} | {:.1} | {:.1} |",
            r.label,
            r.n_seeds,
            r.n_samples,
            100.0 * r.cyclesync_mean,
            100.0 * r.cyclesync_ci95,
            1000.0 * r.mae_mean_s,
            1000.0 * r.mae_ci95_s
        );
    }
    out
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Writer {
    fn new(root: &Path, name: &str) -> Result<Self> {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir)?;
        Ok(Writer {
            dir,
            artifacts: Vec::new(),
        })
    }

    fn path(&mut self, file: &str) -> PathBuf {
        let p = self.dir.join(file);
        self.artifacts.push(p.clone());
        p
    }

    fn text(&mut self, file: &str, body: &str) -> Result<()> {
        let p = self.path(file);
        std::fs::write(p, body)?;
        Ok(())
    }

    fn finish(mut self, name: &str, lab: &Lab, intro: &str, body: &str, checks: Vec<Check>) -> Result<ExperimentOutcome> {
        let mut md = format!("# {name}\n\n{intro}\n\nconfig hash: `{}`\n\n{body}\n## Checks\n\n", lab.cfg.hash()?);
        for c in &checks {
            let _ = writeln!(md, "- {} `{}`: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        self.text("summary.md", &md)?;
        self.text("checks.json", &(serde_json::to_string_pretty(&checks)? + "\n"))?;
        Ok(ExperimentOutcome {
            name: name.to_string(),
            dir: self.dir,
            checks,
            artifacts: self.artifacts,
        })
    }
}

fn emit_arms(w: &mut Writer, title: &str, arms: &[Arm]) -> Result<Vec<ArmSummary>> {
    let rows: Vec<ArmSummary> = arms.iter().map(Arm::summary).collect();
    w.text("scores.csv", &scores_csv(arms))?;
    w.text("summary.csv", &summary_csv(&rows))?;
    let cs = BarChart {
        title: format!("{title}: CycleSync"),
        y_label: "CycleSync x100".into(),
        bars: rows
            .iter()
            .map(|r| Bar {
                label: r.label.clone(),
                value: 100.0 * r.cyclesync_mean,
                error: Some(100.0 * r.cyclesync_ci95),
            })
            .collect(),
    };
    let p = w.path("cyclesync.svg");
    emit_bar_chart(&cs, &p)?;
    let mae = BarChart {
        title: format!("{title}: onset MAE"),
        y_label: "onset MAE (ms)".into(),
        bars: rows
            .iter()
            .map(|r| Bar {
                label: r.label.clone(),
                value: 1000.0 * r.mae_mean_s,
                error: Some(1000.0 * r.mae_ci95_s),
            })
            .collect(),
    };
    let p = w.path("mae.svg");
    emit_bar_chart(&mae, &p)?;
    Ok(rows)
}

fn full_variant(lab: &Lab) -> Variant {
    lab.base_variant("full")
}

fn guided(lab: &Lab) -> SampleMode {
    SampleMode::Guided {
        w_audio: lab.cfg.guidance.w_audio,
    }
}

pub fn run_experiment(lab: &mut Lab, name: &str) -> Result<ExperimentOutcome> {
    let run = match name {
        "E1_delay_sweep" => e1_delay_sweep,
        "E2_loss_ablation" => e2_loss_ablation,
        "E3_asg_sweep" => e3_asg_sweep,
        "E4_rope_ablation" => e4_rope_ablation,
        "E5_offsync" => e5_offsync,
        other => {
            return Err(Error::Usage(format!(
                "unknown experiment `{other}`; valid names: {}",
                EXPERIMENTS.join(", ")
            )))
        }
    };
    run(lab).map_err(|e| match e {
        Error::Usage(_) | Error::Stage { .. } => e,
        e => e.in_stage(name),
    })
}

fn e1_delay_sweep(lab: &mut Lab) -> Result<ExperimentOutcome> {
    let name = "E1_delay_sweep";
    let data = lab.cfg.sweep_dataset.clone();
    let clips = generate_clips(&data).map_err(|e| e.in_stage("synth"))?;
    let cfg = SweepConfig {
        delays_s: lab.cfg.metric.delays_s.clone(),
        cyclesync: lab.cfg.metric.cyclesync(),
        ..SweepConfig::default()
    };
    let res = delay_sweep(&clips, &data, &cfg, lab.backend())?;
    let mut w = Writer::new(lab.root(), name)?;
    w.text("sweep_scores.csv", &res.report.to_csv())?;
    let mut rel = String::from("metric,delay_s,mean_x100,ci95_x100,relative_pct\n");
    for r in &res.relative {
        let _ = writeln!(
            rel,
            "{},{:.3},{:.4},{:.4},{:.4}",
            r.metric,
            r.delay,
            100.0 * r.mean,
            100.0 * r.ci95,
            r.relative_pct
        );
    }
    w.text("relative.csv", &rel)?;
    let chart = LineChart {
        title: "Score under audio-video delay".into(),
        x_label: "delay (s)".into(),
        y_label: "score relative to zero delay (%)".into(),
        series: cfg
            .metrics
            .iter()
            .map(|m| Series {
                label: m.as_str().to_string(),
                points: res
                    .relative
                    .iter()
                    .filter(|r| r.metric == m.as_str() && r.relative_pct.is_finite())
                    .map(|r| (r.delay, r.relative_pct))
                    .collect(),
            })
            .filter(|s| !s.points.is_empty())
            .collect(),
    };
    let p = w.path("relative.svg");
    emit_line_chart(&chart, &p)?;

    let mut table = String::from("| metric | delay (s) | mean x100 | 95% CI | relative (%) |\n|---|---|---|---|---|\n");
    for r in &res.relative {
        let _ = writeln!(
            table,
            "| {} | {:.2} | {:.2} | {:.2} | {:.1} |",
            r.metric,
            r.delay,
            100.0 * r.mean,
            100.0 * r.ci95,
            r.relative_pct
        );
    }
    let mut checks = Vec::new();
    let zero = res.relative_row(SweepMetric::Cyclesync, 0.0).map(|r| r.relative_pct);
    checks.push(Check::new(
        "cyclesync_zero_delay_is_reference",
        zero.is_some_and(|z| (z - 100.0).abs() < 1e-9),
        format!("relative score at 0 s = {:.4}%", zero.unwrap_or(f64::NAN)),
    ));
    let cs_drop = res.drop_pct(SweepMetric::Cyclesync, 0.3);
    let av_drop = res.drop_pct(SweepMetric::AvAlign, 0.3);
    checks.push(Check::new(
        "cyclesync_drop_at_0.3s_at_least_30pct",
        cs_drop.is_some_and(|d| d >= 30.0),
        format!("drop at 0.3 s = {:.2}%", cs_drop.unwrap_or(f64::NAN)),
    ));
    checks.push(Check::new(
        "cyclesync_drops_more_than_av_align",
        matches!((cs_drop, av_drop), (Some(c), Some(a)) if c > a),
        format!(
            "CycleSync drop {:.2}% vs AV-Align drop {:.2}%",
            cs_drop.unwrap_or(f64::NAN),
            av_drop.unwrap_or(f64::NAN)
        ),
    ));
    let curve: Vec<f64> = res
        .relative
        .iter()
        .filter(|r| r.metric == SweepMetric::Cyclesync.as_str())
        .map(|r| r.relative_pct)
        .collect();
    let fall: f64 = curve.windows(2).map(|p| (p[0] - p[1]).max(0.0)).sum();
    let rise: f64 = curve.windows(2).map(|p| (p[1] - p[0]).max(0.0)).sum();
    let below = curve.iter().skip(1).all(|&v| v < curve[0]);
    checks.push(Check::new(
        "cyclesync_decline_monotone_dominant",
        below && fall > rise,
        format!("total fall {fall:.2} points vs total rise {rise:.2} points; all delays below zero delay: {below}"),
    ));
    let intro = format!(
        "{} zero-lag clips, video latents re-rendered with the given delay, backend `{}`.",
        clips.len(),
        lab.backend().name()
    );
    w.finish(name, lab, &intro, &table, checks)
}

fn loss_chart(w: &mut Writer, lab: &mut Lab, variants: &[Variant]) -> Result<String> {
    let mut series = Vec::new();
    let mut table = String::from("| arm | first-window loss | last-window loss | ratio |\n|---|---|---|---|\n");
    for v in variants {
        let models = lab.models(v)?;
        let steps = models.iter().map(|m| m.curve.len()).min().unwrap_or(0);
        let bin = (steps / 40).max(1);
        let points = (0..steps / bin)
            .map(|b| {
                let sum: f64 = models
                    .iter()
                    .map(|m| m.curve[b * bin..(b + 1) * bin].iter().map(|r| r.loss).sum::<f64>())
                    .sum();
                ((b * bin) as f64, sum / (bin * models.len()) as f64)
            })
            .collect::<Vec<_>>();
        if !points.is_empty() {
            series.push(Series {
                label: v.name.clone(),
                points,
            });
        }
        let windows: Vec<(f64, f64)> = models.iter().map(|m| curve_windows(&m.curve)).collect();
        let n = windows.len() as f64;
        let first = windows.iter().map(|w| w.0).sum::<f64>() / n;
        let last = windows.iter().map(|w| w.1).sum::<f64>() / n;
        let _ = writeln!(table, "| {} | {:.4} | {:.4} | {:.3} |", v.name, first, last, last / first);
    }
    if !series.is_empty() {
        let chart = LineChart {
            title: "Training loss (mean over seeds)".into(),
            x_label: "step".into(),
            y_label: "loss".into(),
            series,
        };
        let p = w.path("loss.svg");
        emit_line_chart(&chart, &p)?;
    }
    Ok(table)
}

fn loss_decrease_check(lab: &mut Lab, v: &Variant) -> Result<Check> {
    let models = lab.models(v)?;
    let ok: Vec<bool> = models
        .iter()
        .map(|m| {
            let (a, b) = curve_windows(&m.curve);
            b < a
        })
        .collect();
    Ok(Check::new(
        &format!("{}_loss_decreases", v.name),
        ok.iter().all(|&b| b),
        format!(
            "last-window mean below first-window mean in {}/{} seeds",
            ok.iter().filter(|&&b| b).count(),
            ok.len()
        ),
    ))
}

fn e2_loss_ablation(lab: &mut Lab) -> Result<ExperimentOutcome> {
    let name = "E2_loss_ablation";
    let full = full_variant(lab);
    let plain = Variant {
        name: "lambda0".into(),
        train: TrainParams {
            lambda: 0.0,
            ..full.train.clone()
        },
        ..full.clone()
    };
    let mode = guided(lab);
    let arms = vec![arm(lab, "full", &full, mode)?, arm(lab, "lambda0", &plain, mode)?];
    let mut w = Writer::new(lab.root(), name)?;
    let rows = emit_arms(&mut w, "Motion-aware loss ablation", &arms)?;
    let loss_table = loss_chart(&mut w, lab, &[full.clone(), plain.clone()])?;
    let checks = vec![
        Check::new(
            "motion_loss_mae_not_worse",
            rows[0].mae_mean_s <= rows[1].mae_mean_s,
            format!(
                "onset MAE lambda={} {:.1} ms vs lambda=0 {:.1} ms",
                full.train.lambda,
                1000.0 * rows[0].mae_mean_s,
                1000.0 * rows[1].mae_mean_s
            ),
        ),
        loss_decrease_check(lab, &full)?,
        loss_decrease_check(lab, &plain)?,
    ];
    let body = format!("{}\n{}", summary_table(&rows), loss_table);
    let intro = format!(
        "Motion-weighted loss against plain MSE, {} seeds, samples with w_audio = {}.",
        lab.cfg.n_seeds, lab.cfg.guidance.w_audio
    );
    w.finish(name, lab, &intro, &body, checks)
}

fn e3_asg_sweep(lab: &mut Lab) -> Result<ExperimentOutcome> {
    let name = "E3_asg_sweep";
    let full = full_variant(lab);
    let weights = lab.cfg.asg_weights.clone();
    if weights.is_empty() {
        return Err(Error::Usage("asg_weights is empty".into()));
    }
    let mut arms = Vec::new();
    for &wa in &weights {
        arms.push(arm(lab, &format!("w_audio={wa}"), &full, SampleMode::Guided { w_audio: wa })?);
    }
    let mut w = Writer::new(lab.root(), name)?;
    let rows = emit_arms(&mut w, "Audio sync guidance sweep", &arms)?;
    let mut checks = Vec::new();
    let find = |x: f64| weights.iter().position(|&v| v == x);
    if let (Some(i0), Some(i2)) = (find(0.0), find(2.0)) {
        checks.push(Check::new(
            "asg_w2_not_below_no_asg",
            rows[i2].cyclesync_mean >= rows[i0].cyclesync_mean,
            format!(
                "CycleSync x100 w=2 {:.2} vs w=0 {:.2}",
                100.0 * rows[i2].cyclesync_mean,
                100.0 * rows[i0].cyclesync_mean
            ),
        ));
        // the w=0 row must be plain no-ASG sampling: resample one clip from scratch
        let model = lab.models(&full)?[0].clone();
        let clips = lab.eval_clips()?;
        let clip = &clips[0];
        let req = lab.request(
            clip,
            model.seed,
            GuidanceConfig {
                w_audio: 0.0,
                ..lab.cfg.guidance.clone()
            },
        );
        let s = sample(&model.model, &req)?;
        let score = cyclesync(&clip.audio, &s.latents, lab.backend(), &lab.cfg.metric.cyclesync())?.score;
        let row = arms[i0].scores[0][0].cyclesync;
        checks.push(Check::new(
            "w0_row_equals_no_asg_sampling",
            score == row,
            format!("clip {} seed {}: {score} vs {row}", clip.id, model.seed),
        ));
    }
    let intro = format!("Full model sampled with audio guidance weights {weights:?}, {} seeds.", lab.cfg.n_seeds);
    w.finish(name, lab, &intro, &summary_table(&rows), checks)
}

fn e4_rope_ablation(lab: &mut Lab) -> Result<ExperimentOutcome> {
    let name = "E4_rope_ablation";
    let full = full_variant(lab);
    let no_rope = Variant {
        name: "no_rope".into(),
        model: ModelConfig {
            use_rope: false,
            ..full.model.clone()
        },
        ..full.clone()
    };
    let mode = guided(lab);
    let arms = vec![arm(lab, "audio_rope", &full, mode)?, arm(lab, "no_rope", &no_rope, mode)?];
    let mut w = Writer::new(lab.root(), name)?;
    let rows = emit_arms(&mut w, "Audio RoPE ablation", &arms)?;
    let checks = vec![Check::new(
        "rope_not_below_no_rope",
        rows[0].cyclesync_mean >= rows[1].cyclesync_mean,
        format!(
            "CycleSync x100 with RoPE {:.2} vs without {:.2}",
            100.0 * rows[0].cyclesync_mean,
            100.0 * rows[1].cyclesync_mean
        ),
    )];
    let intro = format!("Audio cross-attention with and without rotary positions, {} seeds.", lab.cfg.n_seeds);
    w.finish(name, lab, &intro, &summary_table(&rows), checks)
}

fn e5_offsync(lab: &mut Lab) -> Result<ExperimentOutcome> {
    let name = "E5_offsync";
    let full = full_variant(lab);
    let arms = vec![
        arm(lab, "full", &full, guided(lab))?,
        arm(lab, "offsync", &full, SampleMode::Offsync)?,
    ];
    let mut w = Writer::new(lab.root(), name)?;
    let rows = emit_arms(&mut w, "Full versus off-sync model", &arms)?;
    let model: std::sync::Arc<TrainedModel> = lab.models(&full)?[0].clone();
    let probes = lab.block_probes(&model, 8)?;
    w.text("block_probes.csv", &block_probe_csv(&probes))?;
    let audio: Vec<f64> = model
        .model
        .config
        .audio_blocks
        .iter()
        .map(|&b| probes[b].first_frame_mse)
        .collect();
    let audio_mean = audio.iter().sum::<f64>() / audio.len().max(1) as f64;
    let checks = vec![
        Check::new(
            "full_above_offsync",
            rows[0].cyclesync_mean > rows[1].cyclesync_mean,
            format!(
                "CycleSync x100 full {:.2} vs off-sync {:.2}",
                100.0 * rows[0].cyclesync_mean,
                100.0 * rows[1].cyclesync_mean
            ),
        ),
        Check::new(
            "first_block_dominates_first_frame",
            probes.first().is_some_and(|p| p.first_frame_mse > audio_mean),
            format!(
                "first-frame MSE when skipping block 0: {:.5}, mean over audio blocks: {:.5}",
                probes.first().map_or(f64::NAN, |p| p.first_frame_mse),
                audio_mean
            ),
        ),
    ];
    let mut body = summary_table(&rows);
    body.push_str("\n| skipped block | divergence L2 | first-frame MSE |\n|---|---|---|\n");
    for p in &probes {
        let _ = writeln!(body, "| {} | {:.4} | {:.5} |", p.block, p.divergence_l2, p.first_frame_mse);
    }
    let intro = format!(
        "Full model against the same network with audio layers bypassed, {} seeds; block-skip probes on seed {}.",
        lab.cfg.n_seeds, model.seed
    );
    w.finish(name, lab, &intro, &body, checks)
}
