//! Skips each block of a briefly trained model in turn and reports how far
//! the sample moves, overall and on the first generated frame.

use synclab::sampler::{skip_block_sweep, GuidanceConfig, SampleRequest};
use synclab::synth_world::{generate_clips, DatasetParams};
use synclab::toy_model::{train, ModelConfig, TrainParams};

fn main() -> synclab::Result<()> {
    let clips = generate_clips(&DatasetParams { n_clips: 8, ..DatasetParams::default() })?;
    let config = ModelConfig { n_blocks: 4, d_model: 24, audio_blocks: vec![2, 3], ..ModelConfig::default() };
    let model = train(&config, &clips, &TrainParams { steps: 150, ..TrainParams::default() })?.checkpoint.model()?;
    let clip = &clips[0];
    let req = SampleRequest {
        init_latent: clip.latents.frame(0).to_vec(),
        audio: clip.features.tensor().clone(),
        class_id: clip.script.class_id(),
        seed: 5,
        guidance: GuidanceConfig { steps: 12, ..GuidanceConfig::default() },
        skip_blocks: Vec::new(),
    };
    for p in skip_block_sweep(&model, &req)? {
        let tag = if config.audio_blocks.contains(&p.block) { "audio" } else { "" };
        println!("skip block {} {tag:>5}: divergence {:.4}, first-frame MSE {:.6}", p.block, p.divergence_l2, p.first_frame_mse);
    }
    Ok(())
}
