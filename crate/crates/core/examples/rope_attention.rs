//! Audio cross-attention with rotary positions depends only on relative
//! time: shifting the query frame and every audio key together leaves the
//! output unchanged.

use synclab::diffcore::{sample_normal, Rng};
use synclab::toy_model::{audio_cross_attention, audio_segment, CrossAttentionParams, RotaryEmbedder};

fn main() -> synclab::Result<()> {
    let mut rng = Rng::new(4);
    let (d, f) = (8, 4);
    let params = CrossAttentionParams {
        w_q: sample_normal(&mut rng, &[d, d])?,
        w_k: sample_normal(&mut rng, &[f, d])?,
        w_v: sample_normal(&mut rng, &[f, d])?,
        n_heads: 2,
        rope: Some(RotaryEmbedder::new(d / 2, 1e4, 0)?),
    };
    let features = sample_normal(&mut rng, &[64, f])?;
    let z = sample_normal(&mut rng, &[d])?;

    let seg = audio_segment(6, 4, 1, features.shape()[0]);
    println!("frame 6 attends to audio rows {}..{} at positions {:?}", seg.start, seg.end, seg.positions);
    let rows = features.slice_rows(seg.start, seg.end)?;
    let out = audio_cross_attention(z.data(), 6.0, &rows, &seg.positions, &params)?;
    let moved: Vec<f64> = seg.positions.iter().map(|p| p + 100.0).collect();
    let shifted = audio_cross_attention(z.data(), 106.0, &rows, &moved, &params)?;
    let diff = out.iter().zip(&shifted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max difference after a joint shift of 100 frames: {diff:.1e}");
    Ok(())
}
