use serde::{Deserialize, Serialize};

use super::EventScript;
use crate::diffcore::{Rng, Tensor};
use crate::error::{Error, Result};

pub const FRAME_RATE_HZ: f64 = 24.0;
pub const LATENT_CHANNELS: usize = 8;

/// Per-frame latent vectors, `T x C`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSequence {
    latents: Tensor,
    frame_rate_hz: f64,
}

impl LatentSequence {
    pub fn new(latents: Tensor, frame_rate_hz: f64) -> Result<Self> {
        if latents.rank() != 2 {
            return Err(Error::invalid(format!("latents must be T x C, got {:?}", latents.shape())));
        }
        if !latents.is_finite() {
            return Err(Error::NonFinite("latent sequence".into()));
        }
        if !(frame_rate_hz > 0.0) {
            return Err(Error::invalid("frame rate must be positive"));
        }
        Ok(LatentSequence {
            latents,
            frame_rate_hz,
        })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.latents
    }

    pub fn into_tensor(self) -> Tensor {
        self.latents
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn n_frames(&self) -> usize {
        self.latents.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.latents.shape()[1]
    }

    pub fn duration_s(&self) -> f64 {
        self.n_frames() as f64 / self.frame_rate_hz
    }

    pub fn frame(&self, l: usize) -> &[f64] {
        self.latents.row(l)
    }

    /// Content moved `frames` later (negative: earlier); vacated frames
    /// repeat the nearest edge frame, so no motion is introduced.
    pub fn shifted_frames(&self, frames: isize) -> Self {
        let t = self.n_frames() as isize;
        let c = self.channels();
        let mut data = Vec::with_capacity(self.latents.len());
        for l in 0..t {
            let src = (l - frames).clamp(0, t - 1) as usize;
            data.extend_from_slice(self.latents.row(src));
        }
        LatentSequence {
            latents: Tensor::new(vec![t as usize, c], data).expect("same shape"),
            frame_rate_hz: self.frame_rate_hz,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentParams {
    pub frame_rate_hz: f64,
    pub channels: usize,
    /// Channels per class group; class `c` moves channels
    /// `(c-1)*group ..c*group`. Remaining channels carry drift only.
    pub group_size: usize,
    /// Displacement of an amplitude-1 event.
    pub motion_scale: f64,
    /// Narrowest half-width of a motion profile.
    pub min_width_s: f64,
    pub base_std: f64,
    pub drift_amplitude: f64,
    pub drift_max_hz: f64,
}

impl Default for LatentParams {
    fn default() -> Self {
        LatentParams {
            frame_rate_hz: FRAME_RATE_HZ,
            channels: LATENT_CHANNELS,
            group_size: 2,
            motion_scale: 1.0,
            min_width_s: 0.01,
            base_std: 0.5,
            drift_amplitude: 0.05,
            drift_max_hz: 1.0,
        }
    }
}

/// `sqrt(2 ln 10)`: the velocity bump falls to 10% of its peak this many
/// widths away from the event.
const TEN_PERCENT_WIDTHS: f64 = 2.145_966_026_289_347;

/// Displacement of one event: the integral of an asymmetric Gaussian velocity
/// bump peaking at the event time, normalized to total displacement 1. The
/// velocity drops to 10% of its peak `lead` before and `lag` after the event.
#[derive(Clone, Copy, Debug)]
struct MotionProfile {
    time_s: f64,
    left: f64,
    right: f64,
}

impl MotionProfile {
    fn new(time_s: f64, lead_s: f64, lag_s: f64, min_width_s: f64) -> Self {
        MotionProfile {
            time_s,
            left: (lead_s / TEN_PERCENT_WIDTHS).max(min_width_s),
            right: (lag_s / TEN_PERCENT_WIDTHS).max(min_width_s),
        }
    }

    fn displacement(&self, t: f64) -> f64 {
        let total = self.left + self.right;
        let x = t - self.time_s;
        let sqrt2 = std::f64::consts::SQRT_2;
        if x <= 0.0 {
            self.left * (1.0 + libm::erf(x / (sqrt2 * self.left))) / total
        } else {
            (self.left + self.right * libm::erf(x / (sqrt2 * self.right))) / total
        }
    }
}

/// Latents for `n_frames` frames whose first frame sits at `start_s`.
pub fn render_latents(
    script: &EventScript,
    start_s: f64,
    n_frames: usize,
    params: &LatentParams,
    rng: &mut Rng,
) -> Result<LatentSequence> {
    let c = params.channels;
    let groups = c / params.group_size.max(1);
    let base: Vec<f64> = (0..c).map(|_| params.base_std * rng.normal()).collect();
    let drift: Vec<(f64, f64)> = (0..c)
        .map(|_| {
            let hz = rng.uniform_in(0.2, params.drift_max_hz);
            let phase = rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
            (hz, phase)
        })
        .collect();
    let events: Vec<(MotionProfile, Vec<f64>)> = script
        .events
        .iter()
        .map(|e| {
            let profile = MotionProfile::new(e.time_s, e.motion_lead_s, e.motion_lag_s, params.min_width_s);
            let group = (e.class_id.max(1) - 1) % groups.max(1);
            let raw: Vec<f64> = (0..params.group_size).map(|_| rng.normal()).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let mut dir = vec![0.0; c];
            for (k, v) in raw.iter().enumerate() {
                let ch = group * params.group_size + k;
                if ch < c {
                    dir[ch] = v / norm * e.amplitude * params.motion_scale;
                }
            }
            (profile, dir)
        })
        .collect();

    let mut data = Vec::with_capacity(n_frames * c);
    for l in 0..n_frames {
        let t = start_s + l as f64 / params.frame_rate_hz;
        for ch in 0..c {
            let (hz, phase) = drift[ch];
            let mut v = base[ch] + params.drift_amplitude * (2.0 * std::f64::consts::PI * hz * t + phase).sin();
            for (profile, dir) in &events {
                if dir[ch] != 0.0 {
                    v += dir[ch] * profile.displacement(t);
                }
            }
            data.push(v);
        }
    }
    LatentSequence::new(Tensor::new(vec![n_frames, c], data)?, params.frame_rate_hz)
}

/// Latents covering the whole script: `round(duration * frame_rate)` frames.
pub fn gen_latents(script: &EventScript, params: &LatentParams, rng: &mut Rng) -> Result<LatentSequence> {
    let n = (script.duration_s * params.frame_rate_hz).round() as usize;
    render_latents(script, 0.0, n, params, rng)
}
