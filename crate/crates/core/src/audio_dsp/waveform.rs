use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RATE_HZ: u32 = 16_000;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, rate_hz: u32) -> Result<Self> {
        if rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(Waveform { samples, rate_hz })
    }

    pub fn silence(duration_s: f64, rate_hz: u32) -> Self {
        let n = (duration_s * rate_hz as f64).round() as usize;
        Waveform {
            samples: vec![0.0; n],
            rate_hz,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz as f64
    }

    /// Linear-interpolation resampling.
    pub fn resample(&self, rate_hz: u32) -> Result<Waveform> {
        if rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if rate_hz == self.rate_hz || self.samples.is_empty() {
            return Waveform::new(self.samples.clone(), rate_hz);
        }
        let n_out = (self.duration_s() * rate_hz as f64).round() as usize;
        let ratio = self.rate_hz as f64 / rate_hz as f64;
        let last = self.samples.len() - 1;
        let out = (0..n_out)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = (pos.floor() as usize).min(last);
                let hi = (lo + 1).min(last);
                let frac = pos - lo as f64;
                self.samples[lo] * (1.0 - frac) + self.samples[hi] * frac
            })
            .collect();
        Waveform::new(out, rate_hz)
    }
}
