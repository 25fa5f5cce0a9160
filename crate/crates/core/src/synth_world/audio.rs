use serde::{Deserialize, Serialize};

use super::EventScript;
use crate::audio_dsp::{Waveform, DEFAULT_RATE_HZ};
use crate::diffcore::Rng;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioParams {
    pub rate_hz: u32,
    /// Gaussian noise floor in dBFS; `None` disables it.
    pub noise_db: Option<f64>,
    pub decay_s: f64,
    /// Peak level of an amplitude-1 burst.
    pub burst_gain: f64,
}

impl Default for AudioParams {
    fn default() -> Self {
        AudioParams {
            rate_hz: DEFAULT_RATE_HZ,
            noise_db: Some(-40.0),
            decay_s: 0.03,
            burst_gain: 0.8,
        }
    }
}

/// Carrier frequency of a class: octaves above 220 Hz.
pub fn class_carrier_hz(class_id: usize) -> f64 {
    220.0 * 2f64.powi(class_id.min(6) as i32)
}

pub struct RenderedAudio {
    pub waveform: Waveform,
    /// Samples that had to be hard-clipped to `[-1, 1]`.
    pub clipped: usize,
}

/// One decaying sinusoidal burst per event, plus the noise floor, over the
/// whole script.
pub fn gen_audio(script: &EventScript, params: &AudioParams, rng: &mut Rng) -> Result<RenderedAudio> {
    render_audio(script, 0.0, script.duration_s, params, rng)
}

/// Renders the window `[start_s, start_s + duration_s)` of the script's
/// soundtrack; the window may extend before 0 or past the script end.
pub fn render_audio(
    script: &EventScript,
    start_s: f64,
    duration_s: f64,
    params: &AudioParams,
    rng: &mut Rng,
) -> Result<RenderedAudio> {
    let rate = params.rate_hz as f64;
    let n = (duration_s * rate).round() as usize;
    let mut samples = match params.noise_db {
        Some(db) => {
            let level = 10f64.powf(db / 20.0);
            (0..n).map(|_| level * rng.normal()).collect()
        }
        None => vec![0.0; n],
    };
    let tail = (params.decay_s * 12.0 * rate) as usize;
    for e in &script.events {
        add_burst(
            &mut samples,
            rate,
            e.time_s - start_s,
            e.amplitude * params.burst_gain,
            class_carrier_hz(e.class_id),
            params.decay_s,
            tail,
        );
    }
    let mut clipped = 0;
    for s in samples.iter_mut() {
        if s.abs() > 1.0 {
            *s = s.clamp(-1.0, 1.0);
            clipped += 1;
        }
    }
    Ok(RenderedAudio {
        waveform: Waveform::new(samples, params.rate_hz)?,
        clipped,
    })
}

pub(crate) fn add_burst(
    samples: &mut [f64],
    rate: f64,
    onset_s: f64,
    gain: f64,
    carrier_hz: f64,
    decay_s: f64,
    tail: usize,
) {
    if gain == 0.0 {
        return;
    }
    let first = (onset_s * rate).ceil().max(0.0) as usize;
    let last = ((onset_s * rate).ceil() as isize + tail as isize).min(samples.len() as isize);
    for i in first..last.max(0) as usize {
        let t = i as f64 / rate - onset_s;
        samples[i] += gain * (-t / decay_s).exp() * (2.0 * std::f64::consts::PI * carrier_hz * t).sin();
    }
}
