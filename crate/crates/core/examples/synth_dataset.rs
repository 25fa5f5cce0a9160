//! Writes a small synthetic dataset to disk and loads it back.

use synclab::synth_world::{gen_dataset, DatasetDir, DatasetParams};

fn main() -> synclab::Result<()> {
    let params = DatasetParams {
        n_clips: 4,
        ..DatasetParams::default()
    };
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("synclab-dataset"));
    let rows = gen_dataset(&params, &out)?;
    println!("{} clips in {}", rows.len(), out.display());

    let ds = DatasetDir::open(&out)?;
    for clip in ds.load_all()? {
        println!(
            "{}: class {} events at {:?}, {} latent frames, {} feature rows",
            clip.id,
            clip.script.class_id(),
            clip.script.times(),
            clip.latents.n_frames(),
            clip.features.tensor().shape()[0]
        );
    }
    Ok(())
}
