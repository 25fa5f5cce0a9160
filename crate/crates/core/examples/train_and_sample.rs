//! Trains a small model for a few hundred steps, then samples one held-out
//! clip with and without audio guidance and from the off-sync model.

use synclab::sampler::{sample, sample_offsync, GuidanceConfig, SampleRequest};
use synclab::sync_metrics::{cyclesync, CycleSyncParams};
use synclab::synth_world::{generate_clip, generate_clips, DatasetParams, OracleV2A};
use synclab::toy_model::{curve_windows, train, ModelConfig, TrainParams};

fn main() -> synclab::Result<()> {
    let data = DatasetParams {
        n_clips: 16,
        ..DatasetParams::default()
    };
    let config = ModelConfig {
        n_blocks: 3,
        d_model: 32,
        audio_blocks: vec![1, 2],
        ..ModelConfig::default()
    };
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let out = train(&config, &generate_clips(&data)?, &TrainParams { steps, ..TrainParams::default() })?;
    let (first, last) = curve_windows(&out.curve);
    println!("{steps} steps: loss {first:.4} -> {last:.4}");
    let model = out.checkpoint.model()?;

    let clip = generate_clip(&DatasetParams { seed: 1007, ..data }, 0)?;
    let oracle = OracleV2A::default();
    let base = SampleRequest {
        init_latent: clip.latents.frame(0).to_vec(),
        audio: clip.features.tensor().clone(),
        class_id: clip.script.class_id(),
        seed: 1,
        guidance: GuidanceConfig::default(),
        skip_blocks: Vec::new(),
    };
    let score = |v| cyclesync(&clip.audio, v, &oracle, &CycleSyncParams::default()).map(|o| o.score);
    let guided = sample(&model, &base)?;
    let unguided = sample(&model, &SampleRequest {
        guidance: GuidanceConfig { w_audio: 0.0, ..GuidanceConfig::default() },
        ..base.clone()
    })?;
    let off = sample_offsync(&model, &base)?;
    println!("events at {:?}", clip.script.times());
    println!("CycleSync with ASG w=2: {:.3}", score(&guided.latents)?);
    println!("CycleSync without ASG:  {:.3}", score(&unguided.latents)?);
    println!("CycleSync off-sync:     {:.3}", score(&off.latents)?);
    Ok(())
}
