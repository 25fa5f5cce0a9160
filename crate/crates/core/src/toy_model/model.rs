use std::collections::BTreeMap;
use std::sync::Arc;

use super::attention::{segment_attention, self_attention, CrossPlan, CrossQuery};
use super::rope::RotaryEmbedder;
use super::segment::audio_segment;
use super::{ModelConfig, OutputHead, ParamStore};
use crate::diffcore::{Rng, Tape, Tensor, Var};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Conditioning of one forward pass. With `use_audio` false the audio
/// cross-attention layers are bypassed and `audio` is never read.
#[derive(Clone, Copy, Debug)]
pub struct Conditioning<'a> {
    pub class_id: usize,
    /// `alpha*T x feature_dim` audio features.
    pub audio: Option<&'a Tensor>,
    pub use_audio: bool,
}

impl<'a> Conditioning<'a> {
    pub fn full(class_id: usize, audio: &'a Tensor) -> Self {
        Conditioning {
            class_id,
            audio: Some(audio),
            use_audio: true,
        }
    }

    pub fn offsync(class_id: usize) -> Self {
        Conditioning {
            class_id,
            audio: None,
            use_audio: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardInput<'a> {
    /// Noised latents, `T x C`.
    pub latents: &'a Tensor,
    /// Flow time in `[0, 1]`; 0 is pure noise.
    pub t: f64,
    pub cond: Conditioning<'a>,
}

/// Output of a recorded forward pass.
pub struct Forward<'t> {
    /// `B*T x C` velocity predictions, samples stacked in input order.
    pub prediction: Var<'t>,
    /// Residual stream after each block (`B*(T+1) x d`).
    pub hidden: Vec<Var<'t>>,
}

/// Diffusion transformer over `[class token, frame tokens]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl ToyModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ParamStore::init(&config, &mut Rng::new(seed))?;
        Ok(ToyModel { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        params.check_layout(&config)?;
        Ok(ToyModel { config, params })
    }

    /// Records every parameter on `tape`, as differentiable leaves when
    /// `trainable`.
    pub fn record<'t>(&self, tape: &'t Tape, trainable: bool) -> BTreeMap<String, Var<'t>> {
        self.params
            .iter()
            .map(|(k, v)| {
                let var = if trainable { tape.param(v.clone()) } else { tape.constant(v.clone()) };
                (k.clone(), var)
            })
            .collect()
    }

    /// Velocity prediction for one sequence, `T x C`.
    pub fn forward(&self, input: &ForwardInput<'_>, skip_blocks: &[usize]) -> Result<Tensor> {
        self.forward_batch(std::slice::from_ref(input), skip_blocks)
    }

    /// Predictions for a batch, stacked as `B*T x C`.
    pub fn forward_batch(&self, inputs: &[ForwardInput<'_>], skip_blocks: &[usize]) -> Result<Tensor> {
        let tape = Tape::new();
        let vars = self.record(&tape, false);
        let out = self.forward_on(&tape, &vars, inputs, skip_blocks)?;
        Ok(out.prediction.value())
    }

    /// Residual stream after each block for one sequence.
    pub fn hidden_states(&self, input: &ForwardInput<'_>, skip_blocks: &[usize]) -> Result<Vec<Tensor>> {
        let tape = Tape::new();
        let vars = self.record(&tape, false);
        let out = self.forward_on(&tape, &vars, std::slice::from_ref(input), skip_blocks)?;
        Ok(out.hidden.iter().map(Var::value).collect())
    }

    fn validate_inputs(&self, inputs: &[ForwardInput<'_>], skip_blocks: &[usize]) -> Result<usize> {
        let cfg = &self.config;
        let first = inputs.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let frames = first.latents.shape().first().copied().unwrap_or(0);
        if frames == 0 || frames > cfg.max_frames {
            return Err(Error::invalid(format!(
                "sequence length {frames} outside 1..={}",
                cfg.max_frames
            )));
        }
        for (i, inp) in inputs.iter().enumerate() {
            if inp.latents.shape() != [frames, cfg.latent_channels] {
                return Err(Error::shape("forward latents", &[frames, cfg.latent_channels], inp.latents.shape()));
            }
            if !(0.0..=1.0).contains(&inp.t) {
                return Err(Error::invalid(format!("sample {i}: t = {} outside [0, 1]", inp.t)));
            }
            if inp.cond.class_id >= cfg.class_vocab {
                return Err(Error::invalid(format!(
                    "sample {i}: class {} outside vocabulary of {}",
                    inp.cond.class_id, cfg.class_vocab
                )));
            }
            if inp.cond.use_audio {
                let audio = inp
                    .cond
                    .audio
                    .ok_or_else(|| Error::invalid(format!("sample {i}: audio required when use_audio is set")))?;
                let want = [cfg.alpha * frames, cfg.feature_dim];
                if audio.shape() != want {
                    return Err(Error::shape("forward audio", &want, audio.shape()));
                }
            }
        }
        if let Some(b) = skip_blocks.iter().find(|&&b| b >= cfg.n_blocks) {
            return Err(Error::invalid(format!("skip block {b} out of range 0..{}", cfg.n_blocks)));
        }
        Ok(frames)
    }

    /// Records a batched forward pass using parameter handles `p`.
    pub fn forward_on<'t>(
        &self,
        tape: &'t Tape,
        p: &BTreeMap<String, Var<'t>>,
        inputs: &[ForwardInput<'_>],
        skip_blocks: &[usize],
    ) -> Result<Forward<'t>> {
        let cfg = &self.config;
        let frames = self.validate_inputs(inputs, skip_blocks)?;
        let get = |name: &str| -> Result<Var<'t>> {
            p.get(name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("missing parameter `{name}`")))
        };
        let (b, d, seq) = (inputs.len(), cfg.d_model, frames + 1);

        let mut x_rows = Vec::with_capacity(b * frames * cfg.latent_channels);
        let mut onehot = vec![0.0; b * cfg.class_vocab];
        let mut temb = Vec::with_capacity(b * d);
        for (i, inp) in inputs.iter().enumerate() {
            x_rows.extend_from_slice(inp.latents.data());
            onehot[i * cfg.class_vocab + inp.cond.class_id] = 1.0;
            temb.extend(time_features(inp.t, d));
        }
        let x_in = tape.constant(Tensor::new(vec![b * frames, cfg.latent_channels], x_rows)?);
        let pos = get("embed.pos")?.slice_rows(0, frames)?;
        let pos = tape.concat(&vec![pos; b], 0)?;
        let frame_tok = x_in.matmul(get("embed.in.w")?)?.add_row(get("embed.in.b")?)?.add(pos)?;
        let class_tok = tape
            .constant(Tensor::new(vec![b, cfg.class_vocab], onehot)?)
            .matmul(get("embed.class")?)?;
        let mut parts = Vec::with_capacity(2 * b);
        for i in 0..b {
            parts.push(class_tok.slice_rows(i, i + 1)?);
            parts.push(frame_tok.slice_rows(i * frames, (i + 1) * frames)?);
        }
        let tokens = tape.concat(&parts, 0)?;
        let temb = tape
            .constant(Tensor::new(vec![b, d], temb)?)
            .matmul(get("embed.time.w1")?)?
            .add_row(get("embed.time.b1")?)?
            .silu()
            .matmul(get("embed.time.w2")?)?
            .add_row(get("embed.time.b2")?)?;
        let mut spread = vec![0.0; b * seq * b];
        for i in 0..b * seq {
            spread[i * b + i / seq] = 1.0;
        }
        let mut x = tokens.add(tape.constant(Tensor::new(vec![b * seq, b], spread)?).matmul(temb)?)?;

        let audio = self.audio_inputs(tape, inputs, frames, seq)?;
        let mut hidden = Vec::with_capacity(cfg.n_blocks);
        for blk in 0..cfg.n_blocks {
            if skip_blocks.contains(&blk) {
                hidden.push(x);
                continue;
            }
            let name = |s: &str| format!("blocks.{blk}.{s}");
            let h = x.layer_norm(LN_EPS);
            let qkv = h.matmul(get(&name("attn.qkv.w"))?)?.add_row(get(&name("attn.qkv.b"))?)?;
            let a = self_attention(qkv, b, seq, cfg.n_heads)?;
            x = x.add(a.matmul(get(&name("attn.out.w"))?)?.add_row(get(&name("attn.out.b"))?)?)?;
            if cfg.is_audio_block(blk) {
                if let Some((feats, plan)) = &audio {
                    let h = x.layer_norm(LN_EPS);
                    let q = h.matmul(get(&name("cross.q.w"))?)?;
                    let k = feats.matmul(get(&name("cross.k.w"))?)?;
                    let v = feats.matmul(get(&name("cross.v.w"))?)?;
                    let c = segment_attention(q, k, v, plan, cfg.n_heads)?;
                    x = x.add(c.matmul(get(&name("cross.out.w"))?)?)?;
                }
            }
            let h = x.layer_norm(LN_EPS);
            let m = h
                .matmul(get(&name("mlp.w1"))?)?
                .add_row(get(&name("mlp.b1"))?)?
                .silu()
                .matmul(get(&name("mlp.w2"))?)?
                .add_row(get(&name("mlp.b2"))?)?;
            x = x.add(m)?;
            hidden.push(x);
        }

        let out = x.layer_norm(LN_EPS).matmul(get("head.w")?)?.add_row(get("head.b")?)?;
        let rows: Vec<Var<'t>> = (0..b)
            .map(|i| out.slice_rows(i * seq + 1, (i + 1) * seq))
            .collect::<Result<_>>()?;
        let mut prediction = if b == 1 { rows[0] } else { tape.concat(&rows, 0)? };
        if cfg.output_head != OutputHead::Velocity {
            let c = cfg.latent_channels;
            let (mut a, mut bk) = (Vec::with_capacity(b * frames * c), Vec::with_capacity(b * frames * c));
            for inp in inputs {
                let (ka, kb) = cfg.output_head.velocity_coefficients(inp.t);
                a.extend(std::iter::repeat_n(ka, frames * c));
                bk.extend(std::iter::repeat_n(kb, frames * c));
            }
            let shape = vec![b * frames, c];
            prediction = prediction
                .mul(tape.constant(Tensor::new(shape.clone(), bk)?))?
                .add(x_in.mul(tape.constant(Tensor::new(shape, a)?))?)?;
        }
        Ok(Forward { prediction, hidden })
    }

    /// Stacked audio features and the query plan, or `None` when no sample
    /// uses audio.
    fn audio_inputs<'t>(
        &self,
        tape: &'t Tape,
        inputs: &[ForwardInput<'_>],
        frames: usize,
        seq: usize,
    ) -> Result<Option<(Var<'t>, Arc<CrossPlan>)>> {
        let cfg = &self.config;
        if !inputs.iter().any(|i| i.cond.use_audio) {
            return Ok(None);
        }
        let n_audio = cfg.alpha * frames;
        let mut feats = vec![0.0; inputs.len() * n_audio * cfg.feature_dim];
        let mut queries = Vec::new();
        for (i, inp) in inputs.iter().enumerate() {
            if !inp.cond.use_audio {
                continue;
            }
            let audio = inp.cond.audio.expect("validated");
            feats[i * n_audio * cfg.feature_dim..][..audio.len()].copy_from_slice(audio.data());
            for l in 0..frames {
                let segment = audio_segment(l, cfg.alpha, cfg.delta_window, n_audio);
                if segment.is_empty() {
                    continue;
                }
                queries.push(CrossQuery {
                    row: i * seq + 1 + l,
                    position: l as f64,
                    key_offset: i * n_audio,
                    segment,
                });
            }
        }
        let rope = if cfg.use_rope {
            Some(RotaryEmbedder::new(cfg.head_dim(), cfg.rope_base, cfg.spatial_pairs)?)
        } else {
            None
        };
        let feats = tape.constant(Tensor::new(vec![inputs.len() * n_audio, cfg.feature_dim], feats)?);
        Ok(Some((feats, Arc::new(CrossPlan { queries, rope }))))
    }
}

/// Sinusoidal embedding of flow time `t`.
pub fn time_features(t: f64, d: usize) -> Vec<f64> {
    let half = d / 2;
    let mut out = vec![0.0; d];
    for k in 0..half {
        let freq = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
        let a = 1000.0 * t * freq;
        out[k] = a.cos();
        out[half + k] = a.sin();
    }
    out
}
