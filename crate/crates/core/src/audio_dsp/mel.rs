use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Hann-windowed magnitude STFT frame followed by a triangular mel filterbank.
pub struct MelFrontend {
    n_fft: usize,
    window: Vec<f64>,
    /// `(first_bin, weights)` per mel band.
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl MelFrontend {
    pub fn new(rate_hz: u32, n_fft: usize, n_mels: usize) -> Self {
        // periodic Hann
        let window = (0..n_fft)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n_fft as f64).cos())
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = rate_hz as f64 / n_fft as f64;
        let top = hz_to_mel(rate_hz as f64 / 2.0);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let filters = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let norm = 2.0 / (hi - lo);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|b| {
                        let f = b as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((b, w * norm))
                    })
                    .collect();
                match weights.first() {
                    Some(&(first, _)) => (first, weights.iter().map(|&(_, w)| w).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        MelFrontend {
            n_fft,
            window,
            filters,
            fft,
        }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn n_mels(&self) -> usize {
        self.filters.len()
    }

    /// Mel magnitudes for the window starting at sample `start`; samples
    /// outside the signal are treated as zero.
    pub fn frame(&self, samples: &[f64], start: isize, buf: &mut Vec<Complex<f64>>, out: &mut [f64]) {
        buf.clear();
        buf.extend((0..self.n_fft).map(|i| {
            let idx = start + i as isize;
            let s = if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize]
            } else {
                0.0
            };
            Complex::new(s * self.window[i], 0.0)
        }));
        self.fft.process(buf);
        for (o, (first, weights)) in out.iter_mut().zip(&self.filters) {
            *o = weights
                .iter()
                .enumerate()
                .map(|(j, w)| w * buf[first + j].norm())
                .sum();
        }
    }
}
