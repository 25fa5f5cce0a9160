//! Audio ingestion, onset-strength envelopes, peak picking and shifting.

mod mel;
mod onset;
mod peaks;
mod shift;
mod wav;
mod waveform;

pub use mel::MelFrontend;
pub use onset::{onset_envelope, EnvelopeSeries, OnsetParams, LOG_OFFSET};
pub use peaks::{pick_peaks, Normalization, OnsetPeaks, PeakParams, AUDIO_FLUX_FLOOR};
pub use shift::shift_audio;
pub use wav::{decode_wav, encode_wav, load_wav, load_wav_at, write_wav};
pub use waveform::{Waveform, DEFAULT_RATE_HZ};

use crate::error::Result;

/// Onset peaks of a waveform with the default detector settings.
pub fn detect_onsets(w: &Waveform) -> Result<OnsetPeaks> {
    let env = onset_envelope(w, OnsetParams::default())?;
    pick_peaks(&env, &PeakParams::default())
}
