//! Tolerance matching of two peak lists and the two score modes.

use synclab::audio_dsp::OnsetPeaks;
use synclab::sync_metrics::{cyclesync_score, match_peaks, ScoreMode};

fn main() -> synclab::Result<()> {
    let reference = OnsetPeaks::new(vec![0.10, 0.50, 0.90])?;
    let reconstructed = OnsetPeaks::new(vec![0.11, 0.70])?;
    for delta in [0.02, 0.05, 0.25] {
        let m = match_peaks(&reference, &reconstructed, delta)?;
        println!(
            "delta {delta:.2} s: matched {}/{} and {}/{}, f1 {:.3}, paper {:.3}",
            m.matched_a,
            m.n_a,
            m.matched_b,
            m.n_b,
            cyclesync_score(&m, ScoreMode::F1),
            cyclesync_score(&m, ScoreMode::Paper)
        );
    }
    Ok(())
}
