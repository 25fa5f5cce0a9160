use crate::audio_dsp::{MelFrontend, Waveform, DEFAULT_RATE_HZ};
use crate::diffcore::{Rng, Tensor};
use crate::error::{Error, Result};

pub const FEATURE_RATE_HZ: f64 = 96.0;
pub const FEATURE_DIM: usize = 16;
const N_MELS: usize = 32;
const N_FFT: usize = 512;
const PROJECTION_SEED: u64 = 0x5EED_A0D1;

/// Audio feature frames, `L x D`, frame `i` centred at `i / rate_hz`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioFeatureSequence {
    features: Tensor,
    rate_hz: f64,
}

impl AudioFeatureSequence {
    pub fn new(features: Tensor, rate_hz: f64) -> Result<Self> {
        if features.rank() != 2 {
            return Err(Error::invalid("features must be L x D"));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("audio features".into()));
        }
        Ok(AudioFeatureSequence { features, rate_hz })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.features
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn zeros_like(&self) -> Self {
        AudioFeatureSequence {
            features: Tensor::zeros(self.features.shape()),
            rate_hz: self.rate_hz,
        }
    }
}

fn projection() -> Tensor {
    let mut rng = Rng::new(PROJECTION_SEED);
    let scale = 1.0 / (N_MELS as f64).sqrt();
    Tensor::new(vec![N_MELS, FEATURE_DIM], rng.normals(N_MELS * FEATURE_DIM))
        .expect("static shape")
        .scale(scale)
}

/// Log-mel frames at 96 Hz projected to `FEATURE_DIM` dims by a fixed seeded
/// matrix. Stands in for a learned audio encoder.
pub fn gen_audio_features(w: &Waveform) -> Result<AudioFeatureSequence> {
    if w.rate_hz() != DEFAULT_RATE_HZ {
        return Err(Error::invalid(format!(
            "features expect {DEFAULT_RATE_HZ} Hz audio, got {}",
            w.rate_hz()
        )));
    }
    let rate = w.rate_hz() as f64;
    let n_frames = (w.duration_s() * FEATURE_RATE_HZ).round() as usize;
    if n_frames == 0 {
        return Err(Error::invalid("clip too short for one feature frame"));
    }
    let front = MelFrontend::new(w.rate_hz(), N_FFT, N_MELS);
    let mut buf = Vec::with_capacity(N_FFT);
    let mut mel = vec![0.0; N_MELS];
    let mut logmel = Vec::with_capacity(n_frames * N_MELS);
    for i in 0..n_frames {
        let centre = (i as f64 * rate / FEATURE_RATE_HZ).round() as isize;
        front.frame(w.samples(), centre - (N_FFT / 2) as isize, &mut buf, &mut mel);
        logmel.extend(mel.iter().map(|m| ((m + 1e-3).ln() + 4.0) / 3.0));
    }
    let logmel = Tensor::new(vec![n_frames, N_MELS], logmel)?;
    AudioFeatureSequence::new(logmel.matmul(&projection())?, FEATURE_RATE_HZ)
}
