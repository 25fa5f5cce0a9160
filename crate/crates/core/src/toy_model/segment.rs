use serde::{Deserialize, Serialize};

/// Audio features attended by one latent frame, with their interpolated
/// temporal positions in frame units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioSegment {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub positions: Vec<f64>,
}

impl AudioSegment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Features `alpha*l - h ..= alpha*l + h` (clipped to the sequence), where
/// `h = alpha*delta`, or `alpha/2` when `delta` is 0. Feature `i` sits at
/// `l + (i - alpha*l) * (delta + 0.5) / h`, so the unclipped window spans
/// `[l - delta - 0.5, l + delta + 0.5]`.
pub fn audio_segment(l: usize, alpha: usize, delta: usize, n_audio: usize) -> AudioSegment {
    let half = (alpha * delta).max(alpha.div_ceil(2)).max(1);
    let center = (alpha * l) as isize;
    let lo = (center - half as isize).max(0) as usize;
    let hi = ((center + half as isize) as usize).min(n_audio.saturating_sub(1));
    if n_audio == 0 || lo > hi {
        return AudioSegment {
            start: lo,
            end: lo,
            positions: Vec::new(),
        };
    }
    let step = (delta as f64 + 0.5) / half as f64;
    let positions = (lo..=hi)
        .map(|i| l as f64 + (i as f64 - center as f64) * step)
        .collect();
    AudioSegment {
        start: lo,
        end: hi + 1,
        positions,
    }
}
