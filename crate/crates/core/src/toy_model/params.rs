use std::collections::BTreeMap;

use super::ModelConfig;
use crate::diffcore::{Rng, Tensor};
use crate::error::{Error, Result};

const INIT_STD: f64 = 0.02;

/// Named model parameters in a stable (sorted) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        self.tensors.insert(name, t);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Shapes every parameter of `config` must have, in creation order.
    pub fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
        let (d, c, f, v, m) = (
            config.d_model,
            config.latent_channels,
            config.feature_dim,
            config.class_vocab,
            config.max_frames,
        );
        let hid = config.mlp_ratio * d;
        let mut out = vec![
            ("embed.in.w".to_string(), vec![c, d], Init::Normal),
            ("embed.in.b".to_string(), vec![d], Init::Zero),
            ("embed.class".to_string(), vec![v, d], Init::Normal),
            ("embed.pos".to_string(), vec![m, d], Init::Normal),
            ("embed.time.w1".to_string(), vec![d, d], Init::Normal),
            ("embed.time.b1".to_string(), vec![d], Init::Zero),
            ("embed.time.w2".to_string(), vec![d, d], Init::Normal),
            ("embed.time.b2".to_string(), vec![d], Init::Zero),
        ];
        for b in 0..config.n_blocks {
            let p = |s: &str| format!("blocks.{b}.{s}");
            out.extend([
                (p("attn.qkv.w"), vec![d, 3 * d], Init::Normal),
                (p("attn.qkv.b"), vec![3 * d], Init::Zero),
                (p("attn.out.w"), vec![d, d], Init::Normal),
                (p("attn.out.b"), vec![d], Init::Zero),
            ]);
            if config.is_audio_block(b) {
                out.extend([
                    (p("cross.q.w"), vec![d, d], Init::Normal),
                    (p("cross.k.w"), vec![f, d], Init::Normal),
                    (p("cross.v.w"), vec![f, d], Init::Normal),
                    (p("cross.out.w"), vec![d, d], Init::Zero),
                ]);
            }
            out.extend([
                (p("mlp.w1"), vec![d, hid], Init::Normal),
                (p("mlp.b1"), vec![hid], Init::Zero),
                (p("mlp.w2"), vec![hid, d], Init::Normal),
                (p("mlp.b2"), vec![d], Init::Zero),
            ]);
        }
        out.push(("head.w".to_string(), vec![d, c], Init::Zero));
        out.push(("head.b".to_string(), vec![c], Init::Zero));
        out
    }

    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        for (name, shape, init) in Self::layout(config) {
            let n = shape.iter().product();
            let data = match init {
                Init::Zero => vec![0.0; n],
                Init::Normal => (0..n).map(|_| INIT_STD * rng.normal()).collect(),
            };
            store.insert(name, Tensor::new(shape, data)?)?;
        }
        Ok(store)
    }

    /// Checks names and shapes against `config`.
    pub fn check_layout(&self, config: &ModelConfig) -> Result<()> {
        let layout = Self::layout(config);
        if layout.len() != self.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, found {}",
                layout.len(),
                self.len()
            )));
        }
        for (name, shape, _) in layout {
            let t = self.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::shape("parameter", &shape, t.shape()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Zero,
    Normal,
}
