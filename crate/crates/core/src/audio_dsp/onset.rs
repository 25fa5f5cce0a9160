use serde::{Deserialize, Serialize};

use super::mel::MelFrontend;
use super::Waveform;
use crate::error::{Error, Result};

pub const LOG_OFFSET: f64 = 1e-6;

/// Nonnegative series sampled every `hop_s` seconds; index `k` sits at
/// `offset_s + k * hop_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSeries {
    pub values: Vec<f64>,
    pub hop_s: f64,
    pub offset_s: f64,
}

impl EnvelopeSeries {
    pub fn new(values: Vec<f64>, hop_s: f64, offset_s: f64) -> Result<Self> {
        if !(hop_s > 0.0) {
            return Err(Error::invalid(format!("hop must be positive, got {hop_s}")));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid(format!("envelope values must be >= 0, got {v}")));
        }
        Ok(EnvelopeSeries {
            values,
            hop_s,
            offset_s,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.offset_s + index as f64 * self.hop_s
    }

    pub fn argmax(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            })
            .map(|(i, _)| i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnsetParams {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    /// Sample offset, from the frame start, at which a frame is stamped.
    /// An onset produces its largest flux when it lies 584..856 samples into
    /// a 1024/256 frame, so the default 720 centres that range.
    pub stamp_offset: usize,
}

impl Default for OnsetParams {
    fn default() -> Self {
        OnsetParams {
            n_fft: 1024,
            hop: 256,
            n_mels: 64,
            stamp_offset: 720,
        }
    }
}

/// Spectral flux of log-mel magnitudes: per frame, the half-wave rectified
/// difference to the previous frame summed over bands. Frame 0 is 0.
///
/// Frame `k` covers samples `[k*hop, k*hop + n_fft)` and is stamped at
/// `k*hop + stamp_offset`.
pub fn onset_envelope(w: &Waveform, params: OnsetParams) -> Result<EnvelopeSeries> {
    let OnsetParams {
        n_fft,
        hop,
        n_mels,
        stamp_offset,
    } = params;
    if hop == 0 || n_fft == 0 || n_mels == 0 {
        return Err(Error::invalid("onset parameters must be positive"));
    }
    if w.len() < n_fft {
        return Err(Error::invalid(format!(
            "clip of {} samples is shorter than one {n_fft}-sample frame",
            w.len()
        )));
    }
    let n_frames = (w.len() - n_fft) / hop + 1;
    let front = MelFrontend::new(w.rate_hz(), n_fft, n_mels);
    let mut buf = Vec::with_capacity(n_fft);
    let mut prev = vec![0.0; n_mels];
    let mut cur = vec![0.0; n_mels];
    let mut values = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        front.frame(w.samples(), (k * hop) as isize, &mut buf, &mut cur);
        cur.iter_mut().for_each(|m| *m = (*m + LOG_OFFSET).ln());
        let flux = if k == 0 {
            0.0
        } else {
            cur.iter().zip(&prev).map(|(c, p)| (c - p).max(0.0)).sum()
        };
        values.push(flux);
        std::mem::swap(&mut prev, &mut cur);
    }
    let rate = w.rate_hz() as f64;
    EnvelopeSeries::new(values, hop as f64 / rate, stamp_offset as f64 / rate)
}
