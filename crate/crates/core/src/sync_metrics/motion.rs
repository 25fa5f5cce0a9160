use crate::audio_dsp::EnvelopeSeries;
use crate::error::{Error, Result};
use crate::synth_world::LatentSequence;

/// Motion magnitude `|z_l - z_{l-1}|`, `T - 1` values one frame apart; value
/// `k` is stamped midway between frames `k` and `k + 1`.
pub fn motion_series(v: &LatentSequence) -> Result<EnvelopeSeries> {
    motion_series_strided(v, 1)
}

/// Motion magnitude between every `stride`-th frame, i.e. at
/// `frame_rate / stride`.
pub fn motion_series_strided(v: &LatentSequence, stride: usize) -> Result<EnvelopeSeries> {
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let frames: Vec<&[f64]> = (0..v.n_frames()).step_by(stride).map(|l| v.frame(l)).collect();
    if frames.len() < 2 {
        return Err(Error::invalid(format!(
            "motion needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let values = frames
        .windows(2)
        .map(|w| w[1].iter().zip(w[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    let hop = stride as f64 / v.frame_rate_hz();
    EnvelopeSeries::new(values, hop, 0.5 * hop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    #[test]
    fn constant_latents_have_no_motion() {
        let v = LatentSequence::new(Tensor::full(&[10, 4], 0.3), 24.0).unwrap();
        let m = motion_series(&v).unwrap();
        assert_eq!(m.len(), 9);
        assert!(m.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_frame_is_error() {
        let v = LatentSequence::new(Tensor::zeros(&[1, 4]), 24.0).unwrap();
        assert!(motion_series(&v).is_err());
    }

    #[test]
    fn step_is_located() {
        let mut data = vec![0.0; 12 * 2];
        for l in 6..12 {
            data[l * 2] = 3.0;
            data[l * 2 + 1] = 4.0;
        }
        let v = LatentSequence::new(Tensor::new(vec![12, 2], data).unwrap(), 24.0).unwrap();
        let m = motion_series(&v).unwrap();
        assert_eq!(m.argmax(), Some(5));
        assert_eq!(m.values[5], 5.0);
        let coarse = motion_series_strided(&v, 4).unwrap();
        assert_eq!(coarse.len(), 2);
        assert_eq!(coarse.values, vec![0.0, 5.0]);
    }
}
