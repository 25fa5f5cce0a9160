//! Toy diffusion transformer: joint self-attention over a class token and
//! latent frames, audio cross-attention with rotary positions in the later
//! blocks, and flow-matching training with a motion-weighted loss.

mod attention;
mod checkpoint;
mod config;
mod loss;
mod model;
mod params;
mod rope;
mod segment;
mod train;

pub use attention::{audio_cross_attention, CrossAttentionParams};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use config::{ModelConfig, OutputHead};
pub use loss::{motion_aware_loss, motion_aware_loss_value, LossTerms};
pub use model::{time_features, Conditioning, Forward, ForwardInput, ToyModel};
pub use params::{Init, ParamStore};
pub use rope::{rope_rotate, PositionIndex, RotaryEmbedder};
pub use segment::{audio_segment, AudioSegment};
pub use train::{
    curve_windows, loss_curve_csv, train, train_model, write_loss_curve, LossRecord, TrainOutcome, TrainParams,
};
