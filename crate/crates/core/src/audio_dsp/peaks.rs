use serde::{Deserialize, Serialize};

use super::EnvelopeSeries;
use crate::error::{Error, Result};

/// Strictly increasing event times in seconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OnsetPeaks {
    times_s: Vec<f64>,
}

impl OnsetPeaks {
    pub fn new(times_s: Vec<f64>) -> Result<Self> {
        if times_s.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("peak times must be finite and >= 0"));
        }
        if times_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("peak times must be strictly increasing"));
        }
        Ok(OnsetPeaks { times_s })
    }

    /// Sorts and deduplicates arbitrary times.
    pub fn from_unsorted(mut times: Vec<f64>) -> Result<Self> {
        times.sort_by(f64::total_cmp);
        times.dedup();
        Self::new(times)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn times(&self) -> &[f64] {
        &self.times_s
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    /// Peaks shifted by `delta_s`, dropping any that leave `[0, limit_s]`.
    pub fn shifted(&self, delta_s: f64, limit_s: f64) -> Self {
        OnsetPeaks {
            times_s: self
                .times_s
                .iter()
                .map(|t| t + delta_s)
                .filter(|t| *t >= 0.0 && *t <= limit_s)
                .collect(),
        }
    }
}

/// How the envelope is scaled before thresholding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Normalization {
    /// Thresholds apply to raw values.
    None,
    /// Divide by `max(envelope max, floor)`; `floor` keeps a quiet envelope
    /// from being stretched to full scale.
    Max { floor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Local-maximum window, in envelope steps before/after.
    pub pre_max: usize,
    pub post_max: usize,
    /// Moving-mean window, in envelope steps before/after.
    pub pre_avg: usize,
    pub post_avg: usize,
    pub delta: f64,
    pub wait_s: f64,
    pub normalization: Normalization,
}

impl Default for PeakParams {
    fn default() -> Self {
        PeakParams {
            pre_max: 3,
            post_max: 3,
            pre_avg: 6,
            post_avg: 6,
            delta: 0.07,
            wait_s: 0.03,
            normalization: Normalization::Max {
                floor: AUDIO_FLUX_FLOOR,
            },
        }
    }
}

/// Normalization floor for log-mel flux envelopes produced with the default
/// onset parameters. A full-scale burst out of a -40 dB noise floor yields a
/// flux near 90; noise-only frames peak near 11.
pub const AUDIO_FLUX_FLOOR: f64 = 150.0;

/// Local-maximum peak picking with a moving-mean threshold and refractory wait.
pub fn pick_peaks(env: &EnvelopeSeries, params: &PeakParams) -> Result<OnsetPeaks> {
    if env.is_empty() {
        return Err(Error::invalid("cannot pick peaks on an empty envelope"));
    }
    let max = env.values.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(OnsetPeaks::empty());
    }
    let scale = match params.normalization {
        Normalization::None => 1.0,
        Normalization::Max { floor } => 1.0 / max.max(floor),
    };
    let x: Vec<f64> = env.values.iter().map(|v| v * scale).collect();
    let n = x.len();
    let mut times = Vec::new();
    let mut last: Option<f64> = None;
    for i in 0..n {
        if x[i] <= 0.0 {
            continue;
        }
        let lo = i.saturating_sub(params.pre_max);
        let hi = (i + params.post_max).min(n - 1);
        if x[lo..=hi].iter().any(|&v| v > x[i]) {
            continue;
        }
        let alo = i.saturating_sub(params.pre_avg);
        let ahi = (i + params.post_avg).min(n - 1);
        let mean = x[alo..=ahi].iter().sum::<f64>() / (ahi - alo + 1) as f64;
        if x[i] < mean + params.delta {
            continue;
        }
        let t = env.time_of(i);
        if let Some(prev) = last {
            if t - prev < params.wait_s {
                continue;
            }
        }
        times.push(t.max(0.0));
        last = Some(t);
    }
    OnsetPeaks::new(times)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(values: Vec<f64>, hop_s: f64) -> EnvelopeSeries {
        EnvelopeSeries::new(values, hop_s, 0.0).unwrap()
    }

    #[test]
    fn zero_envelope_has_no_peaks() {
        let p = pick_peaks(&env(vec![0.0; 50], 0.016), &PeakParams::default()).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn refractory_window_merges_close_impulses() {
        let mut v = vec![0.0; 100];
        v[40] = 1.0;
        v[42] = 0.9; // 10 ms later at a 5 ms hop
        let params = PeakParams {
            pre_max: 1,
            post_max: 1,
            normalization: Normalization::Max { floor: 0.0 },
            ..PeakParams::default()
        };
        let p = pick_peaks(&env(v.clone(), 0.005), &params).unwrap();
        assert_eq!(p.times(), &[0.2]);
        let no_wait = PeakParams { wait_s: 0.0, ..params };
        assert_eq!(pick_peaks(&env(v, 0.005), &no_wait).unwrap().len(), 2);
    }

    #[test]
    fn rejects_unsorted_times() {
        assert!(OnsetPeaks::new(vec![0.2, 0.1]).is_err());
        assert!(OnsetPeaks::new(vec![0.1, 0.1]).is_err());
        assert_eq!(OnsetPeaks::from_unsorted(vec![0.3, 0.1, 0.3]).unwrap().times(), &[0.1, 0.3]);
    }

    #[test]
    fn quiet_envelope_is_not_stretched() {
        let mut v = vec![1.0; 60];
        v[30] = 5.0;
        let p = pick_peaks(&env(v.clone(), 0.016), &PeakParams::default()).unwrap();
        assert!(p.is_empty());
        v[30] = 80.0;
        assert_eq!(pick_peaks(&env(v, 0.016), &PeakParams::default()).unwrap().len(), 1);
    }
}
