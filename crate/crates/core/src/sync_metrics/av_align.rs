use crate::audio_dsp::OnsetPeaks;
use crate::error::{Error, Result};

/// One-to-one matched pairs between audio and motion peaks, found greedily
/// by increasing distance.
pub fn greedy_pairs(a: &OnsetPeaks, b: &OnsetPeaks, delta_s: f64) -> usize {
    let mut candidates: Vec<(f64, f64, f64, usize, usize)> = Vec::new();
    for (i, &x) in a.times().iter().enumerate() {
        for (j, &y) in b.times().iter().enumerate() {
            let d = (x - y).abs();
            if d <= delta_s {
                // key is symmetric under swapping the two sets
                candidates.push((d, x.min(y), x.max(y), i, j));
            }
        }
    }
    candidates.sort_by(|p, q| {
        p.0.total_cmp(&q.0)
            .then(p.1.total_cmp(&q.1))
            .then(p.2.total_cmp(&q.2))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = 0;
    for &(_, _, _, i, j) in &candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs += 1;
        }
    }
    pairs
}

/// AV-Align-style score: intersection over union of one-to-one matched
/// audio and motion peaks, `pairs / (n_a + n_b - pairs)`.
pub fn av_align(audio_peaks: &OnsetPeaks, motion_peaks: &OnsetPeaks, delta_s: f64) -> Result<f64> {
    if !(delta_s >= 0.0) {
        return Err(Error::invalid(format!("tolerance must be >= 0, got {delta_s}")));
    }
    let (na, nb) = (audio_peaks.len(), motion_peaks.len());
    match (na, nb) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let pairs = greedy_pairs(audio_peaks, motion_peaks, delta_s);
    Ok(pairs as f64 / (na + nb - pairs) as f64)
}
