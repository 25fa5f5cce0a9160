//! Euler flow-matching sampler with classifier-free guidance and audio sync
//! guidance composed additively, plus the off-sync and block-skip variants.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{sptn, Rng, Tensor};
use crate::error::{Error, Result};
use crate::synth_world::{LatentSequence, NULL_CLASS};
use crate::toy_model::{Conditioning, ForwardInput, ToyModel};

/// RNG stream of the initial noise, keyed by the request seed.
pub const NOISE_STREAM: u64 = 0x5A3F;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub w_audio: f64,
    pub w_text: f64,
    /// Text weight used on the first denoising step.
    pub w_text_first: f64,
    pub steps: usize,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            w_audio: 2.0,
            w_text: 4.0,
            w_text_first: 7.0,
            steps: 30,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("guidance needs at least one step"));
        }
        if ![self.w_audio, self.w_text, self.w_text_first].iter().all(|w| w.is_finite()) {
            return Err(Error::invalid("guidance weights must be finite"));
        }
        Ok(())
    }

    pub fn text_weight(&self, step: usize) -> f64 {
        if step == 0 {
            self.w_text_first
        } else {
            self.w_text
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRequest {
    /// First-frame latent the sample is conditioned on.
    pub init_latent: Vec<f64>,
    /// `alpha*T x feature_dim` audio features; sets the sample length.
    pub audio: Tensor,
    pub class_id: usize,
    pub seed: u64,
    pub guidance: GuidanceConfig,
    pub skip_blocks: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub state_norm: f64,
    pub velocity_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub latents: LatentSequence,
    pub steps: Vec<StepRecord>,
}

/// `full + w_audio (full - offsync) + w_text (full - null)`.
pub fn guided_prediction(
    pred_full: &Tensor,
    pred_offsync: &Tensor,
    pred_null: &Tensor,
    w_audio: f64,
    w_text: f64,
) -> Result<Tensor> {
    if pred_full.shape() != pred_offsync.shape() {
        return Err(Error::shape("guided_prediction", pred_full.shape(), pred_offsync.shape()));
    }
    if pred_full.shape() != pred_null.shape() {
        return Err(Error::shape("guided_prediction", pred_full.shape(), pred_null.shape()));
    }
    let data = pred_full
        .data()
        .iter()
        .zip(pred_offsync.data())
        .zip(pred_null.data())
        .map(|((&f, &o), &n)| f + w_audio * (f - o) + w_text * (f - n))
        .collect();
    Tensor::new(pred_full.shape().to_vec(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Full,
    Offsync,
}

fn frames_of(model: &ToyModel, req: &SampleRequest) -> Result<usize> {
    let cfg = &model.config;
    let (rows, cols) = req.audio.rows_cols();
    if cols != cfg.feature_dim || rows == 0 || rows % cfg.alpha != 0 {
        return Err(Error::invalid(format!(
            "audio features {:?} must be a positive multiple of {} rows by {} columns",
            req.audio.shape(),
            cfg.alpha,
            cfg.feature_dim
        )));
    }
    if req.init_latent.len() != cfg.latent_channels {
        return Err(Error::shape("init_latent", &[cfg.latent_channels], &[req.init_latent.len()]));
    }
    Ok(rows / cfg.alpha)
}

fn run(model: &ToyModel, req: &SampleRequest, mode: Mode) -> Result<Sample> {
    req.guidance.validate()?;
    let frames = frames_of(model, req)?;
    let c = model.config.latent_channels;
    let mut rng = Rng::for_stream(req.seed, NOISE_STREAM);
    let first = model.config.flow_first_frame(&req.init_latent);
    let mut x = Tensor::new(vec![frames, c], rng.normals(frames * c))?;
    x.row_mut(0).copy_from_slice(&first);
    let zeros = Tensor::zeros(req.audio.shape());
    let (full_cond, null_cond, w_audio) = match mode {
        Mode::Full => (
            Conditioning::full(req.class_id, &req.audio),
            Conditioning::full(NULL_CLASS, &zeros),
            req.guidance.w_audio,
        ),
        Mode::Offsync => (Conditioning::offsync(req.class_id), Conditioning::offsync(NULL_CLASS), 0.0),
    };
    let steps = req.guidance.steps;
    let dt = 1.0 / steps as f64;
    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        let w_text = req.guidance.text_weight(k);
        let eval = |cond: Conditioning<'_>| {
            model.forward(&ForwardInput { latents: &x, t, cond }, &req.skip_blocks)
        };
        let full = eval(full_cond)?;
        // a zero-weight branch contributes exactly nothing, so it is not evaluated
        let off = if w_audio != 0.0 { Some(eval(Conditioning::offsync(req.class_id))?) } else { None };
        let null = if w_text != 0.0 { Some(eval(null_cond)?) } else { None };
        let v = guided_prediction(
            &full,
            off.as_ref().unwrap_or(&full),
            null.as_ref().unwrap_or(&full),
            w_audio,
            w_text,
        )?;
        for (xi, vi) in x.data_mut().iter_mut().zip(v.data()) {
            *xi += dt * vi;
        }
        x.row_mut(0).copy_from_slice(&first);
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("sampler state at step {k}")));
        }
        records.push(StepRecord {
            step: k,
            t,
            state_norm: x.norm(),
            velocity_norm: v.norm(),
        });
    }
    Ok(Sample {
        latents: LatentSequence::new(
            model.config.from_flow_space(&x, &req.init_latent),
            crate::synth_world::FRAME_RATE_HZ,
        )?,
        steps: records,
    })
}

/// Guided Euler sample from noise (seeded) at `t = 0` to data at `t = 1`.
pub fn sample(model: &ToyModel, req: &SampleRequest) -> Result<Sample> {
    run(model, req, Mode::Full)
}

/// Sample from the off-sync model: audio layers bypassed in every branch and
/// no audio guidance.
pub fn sample_offsync(model: &ToyModel, req: &SampleRequest) -> Result<Sample> {
    run(model, req, Mode::Offsync)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockProbe {
    pub block: usize,
    /// `|out - baseline|` over the whole sample.
    pub divergence_l2: f64,
    /// Mean squared difference on the first generated frame (frame 1; frame
    /// 0 is the conditioning frame).
    pub first_frame_mse: f64,
}

/// One sample with `block` bypassed, compared with the unskipped baseline.
pub fn skip_block_probe(model: &ToyModel, req: &SampleRequest, block: usize) -> Result<(Sample, BlockProbe)> {
    if block >= model.config.n_blocks {
        return Err(Error::invalid(format!(
            "block {block} out of range 0..{}",
            model.config.n_blocks
        )));
    }
    let baseline = sample(model, req)?;
    probe_against(model, req, block, &baseline)
}

fn probe_against(model: &ToyModel, req: &SampleRequest, block: usize, baseline: &Sample) -> Result<(Sample, BlockProbe)> {
    let mut skipped = req.clone();
    if !skipped.skip_blocks.contains(&block) {
        skipped.skip_blocks.push(block);
    }
    let out = sample(model, &skipped)?;
    let (a, b) = (out.latents.tensor(), baseline.latents.tensor());
    let divergence_l2 = a.sub(b)?.norm();
    let first_frame_mse = if a.shape()[0] > 1 {
        let c = a.shape()[1];
        a.row(1).iter().zip(b.row(1)).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / c as f64
    } else {
        0.0
    };
    Ok((
        out,
        BlockProbe {
            block,
            divergence_l2,
            first_frame_mse,
        },
    ))
}

/// Probes every block against one shared baseline.
pub fn skip_block_sweep(model: &ToyModel, req: &SampleRequest) -> Result<Vec<BlockProbe>> {
    let baseline = sample(model, req)?;
    (0..model.config.n_blocks)
        .map(|b| probe_against(model, req, b, &baseline).map(|(_, p)| p))
        .collect()
}

pub fn block_probe_csv(rows: &[BlockProbe]) -> String {
    let mut out = String::from("block,divergence_l2,first_frame_mse\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.9},{:.9}", r.block, r.divergence_l2, r.first_frame_mse);
    }
    out
}

/// Writes `<stem>.sptn` (latents) and `<stem>.json` (request echo and
/// per-step norms).
pub fn write_sample(dir: &Path, stem: &str, req: &SampleRequest, sample: &Sample) -> Result<()> {
    sptn::save(&dir.join(format!("{stem}.sptn")), sample.latents.tensor())?;
    let sidecar = serde_json::json!({
        "class_id": req.class_id,
        "seed": req.seed,
        "guidance": req.guidance,
        "skip_blocks": req.skip_blocks,
        "init_latent": req.init_latent,
        "n_frames": sample.latents.n_frames(),
        "steps": sample.steps,
    });
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}
