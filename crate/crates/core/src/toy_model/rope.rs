use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Space-time coordinate of a token. Toy latents are one vector per frame,
/// so `h` and `w` stay 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionIndex {
    pub l: f64,
    pub h: f64,
    pub w: f64,
}

impl PositionIndex {
    pub fn frame(l: f64) -> Self {
        PositionIndex { l, h: 0.0, w: 0.0 }
    }

    pub fn shifted(self, dl: f64) -> Self {
        PositionIndex { l: self.l + dl, ..self }
    }
}

/// Rotates consecutive pairs `(x[2k], x[2k+1])` by `position / base^(2k/d)`.
pub fn rope_rotate(x: &[f64], position: f64, base: f64) -> Result<Vec<f64>> {
    let e = RotaryEmbedder::new(x.len(), base, 0)?;
    let mut out = x.to_vec();
    e.rotate(&mut out, PositionIndex::frame(position));
    Ok(out)
}

/// Rotary embedder over `dim` channels: the first pairs rotate with `l`,
/// then `spatial_pairs` pairs each with `h` and with `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotaryEmbedder {
    dim: usize,
    spatial_pairs: usize,
    inv_freq: Vec<f64>,
}

impl RotaryEmbedder {
    pub fn new(dim: usize, base: f64, spatial_pairs: usize) -> Result<Self> {
        if dim % 2 != 0 {
            return Err(Error::invalid(format!("rotary dimension must be even, got {dim}")));
        }
        let pairs = dim / 2;
        if 2 * spatial_pairs >= pairs.max(1) && dim > 0 {
            return Err(Error::invalid("spatial pairs leave no temporal pairs"));
        }
        let temporal = pairs - 2 * spatial_pairs;
        let axis_freqs = |n: usize| -> Vec<f64> { (0..n).map(|k| base.powf(-2.0 * k as f64 / (2 * n) as f64)).collect() };
        let mut inv_freq = axis_freqs(temporal);
        inv_freq.extend(axis_freqs(spatial_pairs));
        inv_freq.extend(axis_freqs(spatial_pairs));
        Ok(RotaryEmbedder {
            dim,
            spatial_pairs,
            inv_freq,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn angle(&self, k: usize, p: PositionIndex) -> f64 {
        let temporal = self.dim / 2 - 2 * self.spatial_pairs;
        let coord = if k < temporal {
            p.l
        } else if k < temporal + self.spatial_pairs {
            p.h
        } else {
            p.w
        };
        coord * self.inv_freq[k]
    }

    fn apply(&self, x: &mut [f64], p: PositionIndex, sign: f64) {
        debug_assert_eq!(x.len(), self.dim);
        for k in 0..self.dim / 2 {
            let (s, c) = (sign * self.angle(k, p)).sin_cos();
            let (a, b) = (x[2 * k], x[2 * k + 1]);
            x[2 * k] = a * c - b * s;
            x[2 * k + 1] = a * s + b * c;
        }
    }

    pub fn rotate(&self, x: &mut [f64], p: PositionIndex) {
        self.apply(x, p, 1.0);
    }

    /// Inverse (transpose) of [`rotate`](Self::rotate).
    pub fn unrotate(&self, x: &mut [f64], p: PositionIndex) {
        self.apply(x, p, -1.0);
    }
}
