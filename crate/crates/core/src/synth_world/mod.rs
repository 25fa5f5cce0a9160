//! Paired synthetic audio and latent "video" with controllable motion
//! lead/lag, and the oracle video-to-audio backend.

mod audio;
mod dataset;
mod features;
mod latents;
mod oracle;
mod script;

pub use audio::{class_carrier_hz, gen_audio, render_audio, AudioParams, RenderedAudio};
pub use dataset::{
    clip_id, gen_dataset, generate_clip, generate_clips, read_manifest, Clip, DatasetDir, DatasetParams,
    ManifestRow, MANIFEST_FILE,
};
pub use dataset::clip_rngs;
pub use features::{gen_audio_features, AudioFeatureSequence, FEATURE_DIM, FEATURE_RATE_HZ};
pub use latents::{gen_latents, render_latents, LatentParams, LatentSequence, FRAME_RATE_HZ, LATENT_CHANNELS};
pub use oracle::{motion_peak_params, OracleParams, OracleV2A};
pub use script::{random_script, Event, EventScript, ScriptParams, NULL_CLASS};
