//! CycleSync of ground-truth videos against their own audio, then against a
//! video delayed by 0.2 s.

use synclab::sync_metrics::{cyclesync, delayed_latents, CycleSyncParams};
use synclab::synth_world::{generate_clips, DatasetParams, OracleV2A};

fn main() -> synclab::Result<()> {
    let params = DatasetParams {
        n_clips: 8,
        script: DatasetParams::default().script.zero_lag(),
        ..DatasetParams::default()
    };
    let oracle = OracleV2A::default();
    let cs = CycleSyncParams::default();
    for clip in generate_clips(&params)? {
        let aligned = cyclesync(&clip.audio, &clip.latents, &oracle, &cs)?;
        let late = delayed_latents(&clip, &params, 0.2)?;
        let delayed = cyclesync(&clip.audio, &late, &oracle, &cs)?;
        println!(
            "{}: {} audio peaks, CycleSync aligned {:.2}, delayed {:.2}",
            clip.id,
            aligned.reference.len(),
            aligned.score,
            delayed.score
        );
    }
    Ok(())
}
