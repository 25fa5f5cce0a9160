//! Relative CycleSync and AV-Align scores as the video lags the audio.

use synclab::sync_metrics::{delay_sweep, SweepConfig};
use synclab::synth_world::{generate_clips, DatasetParams, OracleV2A};

fn main() -> synclab::Result<()> {
    let params = DatasetParams {
        n_clips: 16,
        script: DatasetParams::default().script.zero_lag(),
        ..DatasetParams::default()
    };
    let clips = generate_clips(&params)?;
    let res = delay_sweep(&clips, &params, &SweepConfig::default(), &OracleV2A::default())?;
    println!("{:<10} {:>7} {:>9} {:>9}", "metric", "delay", "mean", "relative");
    for r in &res.relative {
        println!("{:<10} {:>6.1}s {:>9.3} {:>8.1}%", r.metric, r.delay, r.mean, r.relative_pct);
    }
    Ok(())
}
