use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    av_align, motion_series_strided, score_peaks, CycleSyncParams, ScoreRow, SyncReport, V2ABackend,
};
use crate::audio_dsp::{detect_onsets, pick_peaks, Normalization, OnsetPeaks, PeakParams};
use crate::error::{Error, Result};
use crate::synth_world::{clip_rngs, render_latents, Clip, DatasetParams, LatentSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    /// Audio vs audio reconstructed from the video.
    Cyclesync,
    /// Audio peaks vs motion peaks at a coarse video rate.
    AvAlign,
    /// Audio peaks vs motion peaks at the full latent frame rate.
    AvAlignFull,
}

impl SweepMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepMetric::Cyclesync => "cyclesync",
            SweepMetric::AvAlign => "av_align",
            SweepMetric::AvAlignFull => "av_align_full",
        }
    }
}

impl fmt::Display for SweepMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cyclesync" => Ok(SweepMetric::Cyclesync),
            "av_align" => Ok(SweepMetric::AvAlign),
            "av_align_full" => Ok(SweepMetric::AvAlignFull),
            _ => Err(Error::Usage(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub delays_s: Vec<f64>,
    pub max_margin_s: f64,
    pub metrics: Vec<SweepMetric>,
    pub cyclesync: CycleSyncParams,
    /// Motion peaks for AV-Align use every `av_stride`-th latent frame and a
    /// tolerance of one such frame.
    pub av_stride: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            delays_s: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            max_margin_s: 0.5,
            metrics: vec![SweepMetric::Cyclesync, SweepMetric::AvAlign],
            cyclesync: CycleSyncParams::default(),
            av_stride: 4,
        }
    }
}

/// Mean score at one delay relative to the zero-delay mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeRow {
    pub metric: String,
    pub delay: f64,
    pub mean: f64,
    pub ci95: f64,
    /// `100 * (mean / mean_at_zero - 1)`.
    pub pct_change: f64,
    /// `100 * mean / mean_at_zero`.
    pub relative_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub report: SyncReport,
    pub relative: Vec<RelativeRow>,
}

impl SweepResult {
    pub fn relative_row(&self, metric: SweepMetric, delay: f64) -> Option<&RelativeRow> {
        self.relative
            .iter()
            .find(|r| r.metric == metric.as_str() && (r.delay - delay).abs() < 1e-9)
    }

    /// Relative drop in percent (positive means the score fell).
    pub fn drop_pct(&self, metric: SweepMetric, delay: f64) -> Option<f64> {
        self.relative_row(metric, delay).map(|r| -r.pct_change)
    }
}

/// Peak picking on coarse motion series, where one frame spans several
/// latent frames.
pub fn coarse_motion_peak_params() -> PeakParams {
    PeakParams {
        pre_max: 1,
        post_max: 1,
        pre_avg: 2,
        post_avg: 2,
        delta: 0.15,
        wait_s: 0.03,
        normalization: Normalization::None,
    }
}

/// Motion peaks of `v` sampled every `stride` frames.
pub fn motion_peaks_strided(v: &LatentSequence, stride: usize) -> Result<OnsetPeaks> {
    let params = if stride <= 1 {
        crate::synth_world::motion_peak_params()
    } else {
        coarse_motion_peak_params()
    };
    pick_peaks(&motion_series_strided(v, stride)?, &params)
}

/// The clip's video delayed by `delay_s` against its audio: latents
/// re-rendered over `[-delay, duration - delay)` from the clip's own
/// generator stream, so frame content is an exact time shift.
pub fn delayed_latents(clip: &Clip, dataset: &DatasetParams, delay_s: f64) -> Result<LatentSequence> {
    let [_, _, mut lrng] = clip_rngs(dataset.seed, clip.index);
    render_latents(&clip.script, -delay_s, clip.latents.n_frames(), &dataset.latents, &mut lrng)
}

/// Scores every clip at every delay with every metric; clips run in
/// parallel and rows are folded in clip order.
pub fn delay_sweep(
    clips: &[Clip],
    dataset: &DatasetParams,
    cfg: &SweepConfig,
    backend: &dyn V2ABackend,
) -> Result<SweepResult> {
    if clips.is_empty() {
        return Err(Error::invalid("delay sweep needs at least one clip"));
    }
    if cfg.av_stride == 0 {
        return Err(Error::invalid("av_stride must be positive"));
    }
    for &d in &cfg.delays_s {
        if !(d.is_finite() && d.abs() <= cfg.max_margin_s + 1e-12) {
            return Err(Error::invalid(format!(
                "delay {d} s exceeds the available margin of {} s",
                cfg.max_margin_s
            )));
        }
    }
    let per_clip: Vec<Vec<ScoreRow>> = clips
        .par_iter()
        .map(|clip| sweep_clip(clip, dataset, cfg, backend))
        .collect::<Result<_>>()?;
    let report = SyncReport::from_rows(per_clip.into_iter().flatten().collect());

    let mut relative = Vec::new();
    for metric in &cfg.metrics {
        let base = report.aggregate(metric.as_str(), 0.0).map(|a| a.mean);
        for &d in &cfg.delays_s {
            let Some(agg) = report.aggregate(metric.as_str(), d) else { continue };
            let ratio = match base {
                Some(b) if b > 0.0 => agg.mean / b,
                _ => f64::NAN,
            };
            relative.push(RelativeRow {
                metric: metric.as_str().to_string(),
                delay: d,
                mean: agg.mean,
                ci95: agg.ci95,
                pct_change: 100.0 * (ratio - 1.0),
                relative_pct: 100.0 * ratio,
            });
        }
    }
    Ok(SweepResult { report, relative })
}

fn sweep_clip(clip: &Clip, dataset: &DatasetParams, cfg: &SweepConfig, backend: &dyn V2ABackend) -> Result<Vec<ScoreRow>> {
    let in_clip = |e: Error| Error::Backend {
        clip: clip.id.clone(),
        msg: e.to_string(),
    };
    let audio_peaks = detect_onsets(&clip.audio).map_err(in_clip)?;
    let mut rows = Vec::new();
    for &d in &cfg.delays_s {
        let video = delayed_latents(clip, dataset, d).map_err(in_clip)?;
        for &metric in &cfg.metrics {
            let (score, n_rec) = match metric {
                SweepMetric::Cyclesync => {
                    let rec = backend.reconstruct(&video).map_err(in_clip)?;
                    let rec_peaks = detect_onsets(&rec).map_err(in_clip)?;
                    let out = score_peaks(audio_peaks.clone(), rec_peaks, &cfg.cyclesync)?;
                    (out.score, out.reconstructed.len())
                }
                SweepMetric::AvAlign | SweepMetric::AvAlignFull => {
                    let stride = if metric == SweepMetric::AvAlign { cfg.av_stride } else { 1 };
                    let motion = motion_peaks_strided(&video, stride).map_err(in_clip)?;
                    let tol = stride as f64 / video.frame_rate_hz();
                    (av_align(&audio_peaks, &motion, tol)?, motion.len())
                }
            };
            rows.push(ScoreRow {
                clip_id: clip.id.clone(),
                metric: metric.as_str().to_string(),
                delay_s: d,
                score,
                n_peaks_ref: audio_peaks.len(),
                n_peaks_rec: n_rec,
            });
        }
    }
    Ok(rows)
}
