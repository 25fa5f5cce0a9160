pub mod audio_dsp;
pub mod diffcore;
pub mod error;
pub mod harness_cli;
pub mod sampler;
pub mod sync_metrics;
pub mod synth_world;
pub mod toy_model;

pub use error::{Error, Result};
