use serde::{Deserialize, Serialize};

use super::{cyclesync_score, match_peaks, MatchResult, ScoreMode, V2ABackend};
use crate::audio_dsp::{detect_onsets, OnsetPeaks, Waveform};
use crate::error::{Error, Result};
use crate::synth_world::LatentSequence;

pub const DEFAULT_DELTA_S: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleSyncParams {
    pub delta_s: f64,
    pub mode: ScoreMode,
}

impl Default for CycleSyncParams {
    fn default() -> Self {
        CycleSyncParams {
            delta_s: DEFAULT_DELTA_S,
            mode: ScoreMode::F1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleSyncOutcome {
    pub score: f64,
    pub matching: MatchResult,
    pub reference: OnsetPeaks,
    pub reconstructed: OnsetPeaks,
}

/// Reconstructs audio from `video` with `backend` and scores onset-peak
/// agreement with the original `audio`.
pub fn cyclesync(
    audio: &Waveform,
    video: &LatentSequence,
    backend: &dyn V2ABackend,
    params: &CycleSyncParams,
) -> Result<CycleSyncOutcome> {
    let frame = 1.0 / video.frame_rate_hz();
    if (audio.duration_s() - video.duration_s()).abs() > frame + 1e-9 {
        return Err(Error::invalid(format!(
            "audio lasts {:.3} s but video lasts {:.3} s",
            audio.duration_s(),
            video.duration_s()
        )));
    }
    let reference = detect_onsets(audio)?;
    let reconstructed = detect_onsets(&backend.reconstruct(video)?)?;
    score_peaks(reference, reconstructed, params)
}

pub fn score_peaks(reference: OnsetPeaks, reconstructed: OnsetPeaks, params: &CycleSyncParams) -> Result<CycleSyncOutcome> {
    let matching = match_peaks(&reference, &reconstructed, params.delta_s)?;
    Ok(CycleSyncOutcome {
        score: cyclesync_score(&matching, params.mode),
        matching,
        reference,
        reconstructed,
    })
}
