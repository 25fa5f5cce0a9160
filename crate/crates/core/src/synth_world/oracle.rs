use serde::{Deserialize, Serialize};

use super::audio::add_burst;
use super::LatentSequence;
use crate::audio_dsp::{pick_peaks, Normalization, OnsetPeaks, PeakParams, Waveform, DEFAULT_RATE_HZ};
use crate::diffcore::Rng;
use crate::error::Result;
use crate::sync_metrics::{motion_series, V2ABackend};

const NOISE_SEED: u64 = 0x0AC1_E000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub peaks: PeakParams,
    pub carrier_hz: f64,
    pub gain: f64,
    pub decay_s: f64,
    /// Same background as synthesized clips, so both sides of a comparison
    /// see identical detector conditions.
    pub noise_db: Option<f64>,
}

/// Peak picking on the motion-magnitude series (raw units, frame hop).
pub fn motion_peak_params() -> PeakParams {
    PeakParams {
        pre_max: 2,
        post_max: 2,
        pre_avg: 3,
        post_avg: 3,
        delta: 0.15,
        wait_s: 0.03,
        normalization: Normalization::None,
    }
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            peaks: motion_peak_params(),
            carrier_hz: 1000.0,
            gain: 0.8,
            decay_s: 0.03,
            noise_db: Some(-40.0),
        }
    }
}

/// Motion-driven video-to-audio synthesizer: one burst at every peak of the
/// latent motion magnitude `|z_l - z_{l-1}|`.
#[derive(Clone, Debug, Default)]
pub struct OracleV2A {
    pub params: OracleParams,
}

impl OracleV2A {
    pub fn new(params: OracleParams) -> Self {
        OracleV2A { params }
    }

    pub fn motion_peaks(&self, v: &LatentSequence) -> Result<OnsetPeaks> {
        if v.n_frames() < 2 {
            return Ok(OnsetPeaks::empty());
        }
        pick_peaks(&motion_series(v)?, &self.params.peaks)
    }
}

impl V2ABackend for OracleV2A {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn reconstruct(&self, v: &LatentSequence) -> Result<Waveform> {
        let rate = DEFAULT_RATE_HZ as f64;
        let n = (v.duration_s() * rate).round() as usize;
        let mut samples = match self.params.noise_db {
            Some(db) => {
                let level = 10f64.powf(db / 20.0);
                let mut rng = Rng::new(NOISE_SEED);
                (0..n).map(|_| level * rng.normal()).collect()
            }
            None => vec![0.0; n],
        };
        let tail = (self.params.decay_s * 12.0 * rate) as usize;
        for &t in self.motion_peaks(v)?.times() {
            add_burst(&mut samples, rate, t, self.params.gain, self.params.carrier_hz, self.params.decay_s, tail);
        }
        samples.iter_mut().for_each(|s| *s = s.clamp(-1.0, 1.0));
        Waveform::new(samples, DEFAULT_RATE_HZ)
    }
}
