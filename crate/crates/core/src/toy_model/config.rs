use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::synth_world::{FEATURE_DIM, LATENT_CHANNELS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Blocks that carry audio cross-attention.
    pub audio_blocks: Vec<usize>,
    pub rope_base: f64,
    /// Rotate queries and audio keys by their temporal positions.
    pub use_rope: bool,
    /// Rotary pairs per head reserved for each spatial axis.
    pub spatial_pairs: usize,
    /// Audio features per latent frame.
    pub alpha: usize,
    /// Half-width of the audio window around a frame, in frames.
    pub delta_window: usize,
    /// Class ids `0..class_vocab`; 0 is the null condition.
    pub class_vocab: usize,
    pub latent_channels: usize,
    pub feature_dim: usize,
    pub max_frames: usize,
    pub mlp_ratio: usize,
    /// Generate offsets from the conditioning frame instead of absolute
    /// latents.
    pub first_frame_residual: bool,
    pub output_head: OutputHead,
}

/// How the network output `F` becomes a velocity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputHead {
    /// `v = F`.
    Velocity,
    /// Clean estimate `D = F` and `v = (D - x_t) / max(1 - t, 0.01)`.
    Denoised,
    /// Clean estimate `D = c_skip(t) x_t + c_out(t) F` with
    /// `c_skip = t s^2 / n`, `c_out = (1 - t) s / sqrt(n)`,
    /// `n = t^2 s^2 + (1 - t)^2`, and `v = (D - x_t) / (1 - t)`.
    Preconditioned { sigma_data: f64 },
}

impl OutputHead {
    /// Coefficients `(a, b)` of `v = a x_t + b F`.
    pub fn velocity_coefficients(self, t: f64) -> (f64, f64) {
        match self {
            OutputHead::Velocity => (0.0, 1.0),
            OutputHead::Denoised => {
                let k = 1.0 / (1.0 - t).max(0.01);
                (-k, k)
            }
            OutputHead::Preconditioned { sigma_data: s } => {
                let n = t * t * s * s + (1.0 - t) * (1.0 - t);
                ((t * s * s - (1.0 - t)) / n, s / n.sqrt())
            }
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_blocks: 6,
            d_model: 64,
            n_heads: 4,
            audio_blocks: vec![3, 4, 5],
            rope_base: 10_000.0,
            use_rope: true,
            spatial_pairs: 0,
            alpha: 4,
            delta_window: 1,
            class_vocab: 4,
            latent_channels: LATENT_CHANNELS,
            feature_dim: FEATURE_DIM,
            max_frames: 64,
            mlp_ratio: 2,
            first_frame_residual: true,
            output_head: OutputHead::Denoised,
        }
    }
}

impl ModelConfig {
    /// A small configuration for gradient checks and quick tests.
    pub fn tiny() -> Self {
        ModelConfig {
            n_blocks: 2,
            d_model: 8,
            n_heads: 2,
            audio_blocks: vec![1],
            latent_channels: 3,
            feature_dim: 4,
            max_frames: 8,
            ..ModelConfig::default()
        }
    }

    /// Latents in the space the flow runs in: offsets from frame 0 when
    /// `first_frame_residual` is set.
    pub fn to_flow_space(&self, z: &Tensor) -> Tensor {
        if !self.first_frame_residual || z.shape()[0] == 0 {
            return z.clone();
        }
        let (rows, c) = z.rows_cols();
        let mut out = z.clone();
        for r in 0..rows {
            for j in 0..c {
                out.data_mut()[r * c + j] -= z.data()[j];
            }
        }
        out
    }

    /// Inverse of [`to_flow_space`](Self::to_flow_space) given the
    /// conditioning frame.
    pub fn from_flow_space(&self, x: &Tensor, first: &[f64]) -> Tensor {
        if !self.first_frame_residual {
            return x.clone();
        }
        let c = first.len();
        let mut out = x.clone();
        out.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v += first[i % c]);
        out
    }

    /// Frame 0 in flow space.
    pub fn flow_first_frame(&self, first: &[f64]) -> Vec<f64> {
        if self.first_frame_residual {
            vec![0.0; first.len()]
        } else {
            first.to_vec()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn is_audio_block(&self, b: usize) -> bool {
        self.audio_blocks.contains(&b)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.n_blocks == 0 || self.n_heads == 0 || self.d_model == 0 {
            return bad("n_blocks, n_heads and d_model must be positive".into());
        }
        if self.d_model % (2 * self.n_heads) != 0 {
            return bad(format!(
                "d_model {} must be divisible by 2 * n_heads = {}",
                self.d_model,
                2 * self.n_heads
            ));
        }
        if 4 * self.spatial_pairs >= self.head_dim() {
            return bad(format!("spatial_pairs {} leaves no temporal rotary pairs", self.spatial_pairs));
        }
        if let Some(b) = self.audio_blocks.iter().find(|&&b| b >= self.n_blocks) {
            return bad(format!("audio block {b} out of range 0..{}", self.n_blocks));
        }
        if self.alpha == 0 || self.class_vocab < 2 || self.latent_channels == 0 || self.feature_dim == 0 {
            return bad("alpha, latent_channels, feature_dim must be positive and class_vocab >= 2".into());
        }
        if self.max_frames == 0 || self.mlp_ratio == 0 {
            return bad("max_frames and mlp_ratio must be positive".into());
        }
        if let OutputHead::Preconditioned { sigma_data } = self.output_head {
            if !(sigma_data > 0.0 && sigma_data.is_finite()) {
                return bad(format!("sigma_data must be positive, got {sigma_data}"));
            }
        }
        if !(self.rope_base > 1.0) {
            return bad(format!("rope_base must exceed 1, got {}", self.rope_base));
        }
        Ok(())
    }
}
