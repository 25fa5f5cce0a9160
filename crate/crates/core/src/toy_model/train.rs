use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{motion_aware_loss, Checkpoint, Conditioning, ForwardInput, ModelConfig, ToyModel};
use crate::diffcore::{Rng, Tape, Tensor};
use crate::error::{Error, Result};
use crate::synth_world::{Clip, NULL_CLASS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    /// Weight of the motion term.
    pub lambda: f64,
    pub seed: u64,
    /// Probability of replacing a sample's condition by the null class with
    /// zeroed audio.
    pub cond_dropout: f64,
    /// Probability of keeping the class but bypassing the audio layers,
    /// which is the off-sync branch used by audio guidance.
    pub audio_dropout: f64,
    pub warmup_steps: usize,
    /// Final learning rate as a fraction of `lr` (cosine decay).
    pub final_lr_frac: f64,
    pub grad_clip: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            steps: 2000,
            lr: 1e-3,
            batch: 2,
            lambda: 1.0,
            seed: 0,
            cond_dropout: 0.1,
            audio_dropout: 0.1,
            warmup_steps: 100,
            final_lr_frac: 0.1,
            grad_clip: 1.0,
        }
    }
}

impl TrainParams {
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = (self.steps.saturating_sub(self.warmup_steps)).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.lr * (self.final_lr_frac + (1.0 - self.final_lr_frac) * cos)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub mse_term: f64,
    pub motion_term: f64,
}

pub fn loss_curve_csv(curve: &[LossRecord]) -> String {
    let mut out = String::from("step,loss,mse_term,motion_term\n");
    for r in curve {
        let _ = writeln!(out, "{},{:.9},{:.9},{:.9}", r.step, r.loss, r.mse_term, r.motion_term);
    }
    out
}

pub fn write_loss_curve(path: &Path, curve: &[LossRecord]) -> Result<()> {
    std::fs::write(path, loss_curve_csv(curve))?;
    Ok(())
}

/// Mean loss over the first and the last tenth of the curve.
pub fn curve_windows(curve: &[LossRecord]) -> (f64, f64) {
    let w = (curve.len() / 10).max(1);
    let mean = |s: &[LossRecord]| s.iter().map(|r| r.loss).sum::<f64>() / s.len().max(1) as f64;
    (mean(&curve[..w.min(curve.len())]), mean(&curve[curve.len().saturating_sub(w)..]))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<LossRecord>,
}

struct Adam {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new() -> Self {
        Adam {
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut ToyModel, grads: &BTreeMap<String, Tensor>, lr: f64, scale: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (name, g) in grads {
            let p = model.params.get_mut(name).expect("gradient for a known parameter");
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi * scale;
                *mi = Self::B1 * *mi + (1.0 - Self::B1) * gi;
                *vi = Self::B2 * *vi + (1.0 - Self::B2) * gi * gi;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains a fresh model on `clips` with flow matching.
pub fn train(config: &ModelConfig, clips: &[Clip], params: &TrainParams) -> Result<TrainOutcome> {
    let model = ToyModel::new(config.clone(), params.seed)?;
    train_model(model, clips, params)
}

/// One training batch: clean latents, noised input, flow time, condition.
struct Example<'c> {
    clip: &'c Clip,
    /// Clean latents in flow space.
    z: Tensor,
    xt: Tensor,
    t: f64,
    dropped: bool,
    audio_dropped: bool,
}

fn draw_batch<'c>(
    clips: &'c [Clip],
    flow: &[Tensor],
    params: &TrainParams,
    step: usize,
) -> Result<Vec<Example<'c>>> {
    let mut rng = Rng::for_stream(params.seed, step as u64 + 1);
    (0..params.batch)
        .map(|_| {
            let index = rng.below(clips.len());
            let t = rng.uniform();
            let dropped = rng.uniform() < params.cond_dropout;
            let audio_dropped = rng.uniform() < params.audio_dropout;
            let z = &flow[index];
            let c = z.shape()[1];
            let mut xt: Vec<f64> = z.data().iter().map(|&zi| (1.0 - t) * rng.normal() + t * zi).collect();
            xt[..c].copy_from_slice(z.row(0));
            Ok(Example {
                clip: &clips[index],
                z: z.clone(),
                xt: Tensor::new(z.shape().to_vec(), xt)?,
                t,
                dropped,
                audio_dropped,
            })
        })
        .collect()
}

/// Continues training `model` for `params.steps` steps.
pub fn train_model(mut model: ToyModel, clips: &[Clip], params: &TrainParams) -> Result<TrainOutcome> {
    if clips.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if params.batch == 0 {
        return Err(Error::invalid("batch must be positive"));
    }
    let frames = clips[0].latents.n_frames();
    if frames < 2 || clips.iter().any(|c| c.latents.n_frames() != frames) {
        return Err(Error::invalid("training clips must share a length of at least 2 frames"));
    }
    let flow: Vec<Tensor> = clips.iter().map(|c| model.config.to_flow_space(c.latents.tensor())).collect();
    let mut adam = Adam::new();
    let mut curve = Vec::with_capacity(params.steps);
    for step in 0..params.steps {
        let batch = draw_batch(clips, &flow, params, step)?;
        let zero_audio: Vec<Tensor> = batch
            .iter()
            .map(|e| Tensor::zeros(e.clip.features.tensor().shape()))
            .collect();
        let inputs: Vec<ForwardInput<'_>> = batch
            .iter()
            .zip(&zero_audio)
            .map(|(e, zeros)| ForwardInput {
                latents: &e.xt,
                t: e.t,
                cond: if e.dropped {
                    Conditioning::full(NULL_CLASS, zeros)
                } else if e.audio_dropped {
                    Conditioning::offsync(e.clip.script.class_id())
                } else {
                    Conditioning::full(e.clip.script.class_id(), e.clip.features.tensor())
                },
            })
            .collect();

        let tape = Tape::new();
        let vars = model.record(&tape, true);
        let pred = model.forward_on(&tape, &vars, &inputs, &[])?.prediction;

        let c = model.config.latent_channels;
        let (mut xt, mut scale, mut gt, mut prev) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for e in &batch {
            let z = &e.z;
            xt.extend_from_slice(e.xt.data());
            scale.extend(std::iter::repeat_n(1.0 - e.t, z.len()));
            gt.extend_from_slice(&z.data()[c..]);
            prev.extend_from_slice(&z.data()[..z.len() - c]);
        }
        let rows = batch.len() * frames;
        let zhat = tape
            .constant(Tensor::new(vec![rows, c], xt)?)
            .add(pred.mul(tape.constant(Tensor::new(vec![rows, c], scale)?))?)?;
        let parts = (0..batch.len())
            .map(|b| zhat.slice_rows(b * frames + 1, (b + 1) * frames))
            .collect::<Result<Vec<_>>>()?;
        let zhat = tape.concat(&parts, 0)?;
        let shape = vec![batch.len() * (frames - 1), c];
        let terms = motion_aware_loss(
            zhat,
            tape.constant(Tensor::new(shape.clone(), gt)?),
            tape.constant(Tensor::new(shape, prev)?),
            params.lambda,
        )?;
        let loss = terms.total.value().item();
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {step}")));
        }
        tape.backward(terms.total)?;
        let grads: BTreeMap<String, Tensor> = vars
            .iter()
            .filter_map(|(k, v)| tape.grad(*v).map(|g| (k.clone(), g)))
            .collect();
        let norm = grads.values().map(|g| g.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
        let clip = if params.grad_clip > 0.0 && norm > params.grad_clip {
            params.grad_clip / norm
        } else {
            1.0
        };
        adam.step(&mut model, &grads, params.lr_at(step), clip);
        curve.push(LossRecord {
            step,
            loss,
            mse_term: terms.mse.value().item(),
            motion_term: terms.motion.value().item(),
        });
    }
    if !model.params.is_finite() {
        return Err(Error::NonFinite("parameters after training".into()));
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: model.config,
            params: model.params,
            train_step: params.steps as u64,
            seed: params.seed,
        },
        curve,
    })
}
