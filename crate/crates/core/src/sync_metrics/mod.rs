//! Audio-visual synchronization metrics: the cycle-consistency score over a
//! pluggable video-to-audio backend, the direct peak-matching baseline, and
//! the delay-sweep protocol.

mod av_align;
mod backend;
mod cyclesync;
mod matching;
mod motion;
mod report;
mod sweep;

pub use av_align::{av_align, greedy_pairs};
pub use backend::{backend_from_name, ExternalV2A, V2ABackend};
pub use cyclesync::{cyclesync, score_peaks, CycleSyncOutcome, CycleSyncParams, DEFAULT_DELTA_S};
pub use matching::{cyclesync_score, match_peaks, MatchResult, ScoreMode};
pub use motion::{motion_series, motion_series_strided};
pub use report::{round6, summarize, Aggregate, ScoreRow, SyncReport};
pub use sweep::{
    coarse_motion_peak_params, delay_sweep, delayed_latents, motion_peaks_strided, RelativeRow, SweepConfig,
    SweepMetric, SweepResult,
};
