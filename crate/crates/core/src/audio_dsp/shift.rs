use super::Waveform;
use crate::error::{Error, Result};

/// Delays (positive) or advances (negative) the content by
/// `round(delay_s * rate)` samples, zero-filling the vacated end; length is
/// preserved.
pub fn shift_audio(w: &Waveform, delay_s: f64) -> Result<Waveform> {
    if !delay_s.is_finite() || delay_s.abs() >= w.duration_s() {
        return Err(Error::invalid(format!(
            "shift of {delay_s} s exceeds clip length {} s",
            w.duration_s()
        )));
    }
    let n = w.len();
    let k = (delay_s * w.rate_hz() as f64).round() as isize;
    let src = w.samples();
    let out = (0..n as isize)
        .map(|i| {
            let j = i - k;
            if j >= 0 && (j as usize) < n {
                src[j as usize]
            } else {
                0.0
            }
        })
        .collect();
    Waveform::new(out, w.rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_delay_is_identity() {
        let w = Waveform::new((0..100).map(|i| i as f64 / 100.0).collect(), 16_000).unwrap();
        assert_eq!(shift_audio(&w, 0.0).unwrap(), w);
    }

    #[test]
    fn tenth_of_second_at_16k() {
        let w = Waveform::new(vec![0.5; 16_000], 16_000).unwrap();
        let s = shift_audio(&w, 0.1).unwrap();
        assert_eq!(s.len(), w.len());
        assert!(s.samples()[..1600].iter().all(|&v| v == 0.0));
        assert!(s.samples()[1600..].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn beyond_clip_is_error() {
        let w = Waveform::new(vec![0.5; 1_600], 16_000).unwrap();
        assert!(shift_audio(&w, 0.1).is_err());
        assert!(shift_audio(&w, -0.2).is_err());
    }
}
