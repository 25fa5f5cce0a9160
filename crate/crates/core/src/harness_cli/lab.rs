use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{digest, ExperimentConfig};
use crate::error::{Error, Result};
use crate::sampler::{sample, sample_offsync, skip_block_sweep, BlockProbe, GuidanceConfig, SampleRequest};
use crate::sync_metrics::{backend_from_name, cyclesync, summarize, V2ABackend};
use crate::synth_world::{generate_clips, Clip, DatasetParams, LatentSequence, OracleV2A};
use crate::toy_model::{train, Checkpoint, LossRecord, ModelConfig, ToyModel, TrainParams};

/// A model/training recipe compared across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SampleMode {
    Guided { w_audio: f64 },
    Offsync,
}

impl SampleMode {
    fn key(self) -> String {
        match self {
            SampleMode::Guided { w_audio } => format!("w{w_audio}"),
            SampleMode::Offsync => "off".into(),
        }
    }
}

pub struct TrainedModel {
    pub variant: String,
    pub seed: u64,
    pub model: ToyModel,
    pub curve: Vec<LossRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub clip_id: String,
    pub cyclesync: f64,
    /// Mean distance from each scripted event to the nearest motion peak of
    /// the sample, capped.
    pub mae_s: f64,
    pub n_motion_peaks: usize,
}

/// Shared state of the experiments of one run: generated clips, trained
/// models (also cached on disk under `<out>/cache`) and sample scores.
pub struct Lab {
    pub cfg: ExperimentConfig,
    backend: Box<dyn V2ABackend>,
    train_clips: Option<Arc<Vec<Clip>>>,
    eval_clips: Option<Arc<Vec<Clip>>>,
    models: BTreeMap<String, Arc<TrainedModel>>,
    scores: BTreeMap<String, Arc<Vec<ClipScore>>>,
}

/// Onset-timing error of `video` against the scripted event times.
pub fn onset_mae(event_times: &[f64], video: &LatentSequence, cap_s: f64) -> Result<(f64, usize)> {
    let peaks = OracleV2A::default().motion_peaks(video)?;
    if event_times.is_empty() {
        return Ok((0.0, peaks.len()));
    }
    let err: f64 = event_times
        .iter()
        .map(|&e| peaks.times().iter().map(|p| (p - e).abs()).fold(cap_s, f64::min))
        .sum();
    Ok((err / event_times.len() as f64, peaks.len()))
}

/// Mean over seeds of per-seed means, and the 95% CI half-width across seeds.
pub fn seed_mean(per_seed: &[Vec<f64>]) -> (f64, f64) {
    let means: Vec<f64> = per_seed
        .iter()
        .map(|v| v.iter().sum::<f64>() / v.len().max(1) as f64)
        .collect();
    let (m, _, ci) = summarize(&means);
    (m, ci)
}

impl Lab {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let backend = backend_from_name(&cfg.metric.backend)?;
        Ok(Lab {
            cfg,
            backend,
            train_clips: None,
            eval_clips: None,
            models: BTreeMap::new(),
            scores: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.cfg.out_dir
    }

    pub fn backend(&self) -> &dyn V2ABackend {
        self.backend.as_ref()
    }

    fn clips(slot: &mut Option<Arc<Vec<Clip>>>, params: &DatasetParams) -> Result<Arc<Vec<Clip>>> {
        if let Some(c) = slot {
            return Ok(c.clone());
        }
        let c = Arc::new(generate_clips(params).map_err(|e| e.in_stage("synth"))?);
        *slot = Some(c.clone());
        Ok(c)
    }

    pub fn train_clips(&mut self) -> Result<Arc<Vec<Clip>>> {
        Self::clips(&mut self.train_clips, &self.cfg.dataset)
    }

    pub fn eval_clips(&mut self) -> Result<Arc<Vec<Clip>>> {
        Self::clips(&mut self.eval_clips, &self.cfg.eval_dataset)
    }

    /// The configured model and training recipe.
    pub fn base_variant(&self, name: &str) -> Variant {
        Variant {
            name: name.to_string(),
            model: self.cfg.model.clone(),
            train: self.cfg.train.clone(),
        }
    }

    fn model_key(&self, v: &Variant, seed: u64) -> Result<String> {
        let train = TrainParams { seed, ..v.train.clone() };
        digest(&(&v.model, &train, &self.cfg.dataset))
    }

    fn cache_paths(&self, v: &Variant, seed: u64, key: &str) -> (PathBuf, PathBuf) {
        let dir = self.root().join("cache");
        let stem = format!("{}-seed{seed}-{key}", v.name);
        (dir.join(format!("{stem}.ckpt")), dir.join(format!("{stem}.curve.json")))
    }

    fn load_cached(&self, v: &Variant, seed: u64, key: &str) -> Option<TrainedModel> {
        let (ckpt, curve) = self.cache_paths(v, seed, key);
        let c = Checkpoint::load(&ckpt).ok()?;
        let curve: Vec<LossRecord> = serde_json::from_str(&std::fs::read_to_string(curve).ok()?).ok()?;
        if c.config != v.model || c.seed != seed || c.train_step != v.train.steps as u64 {
            return None;
        }
        Some(TrainedModel {
            variant: v.name.clone(),
            seed,
            model: c.model().ok()?,
            curve,
        })
    }

    /// Trained models of `variant` for seed runs `0..n_seeds`, training the
    /// missing ones in parallel.
    pub fn models(&mut self, v: &Variant) -> Result<Vec<Arc<TrainedModel>>> {
        let seeds: Vec<u64> = (0..self.cfg.n_seeds).map(|k| self.cfg.seed + k as u64).collect();
        let keys: Vec<String> = seeds.iter().map(|&s| self.model_key(v, s)).collect::<Result<_>>()?;
        let missing: Vec<(u64, String)> = seeds
            .iter()
            .zip(&keys)
            .filter(|(_, k)| !self.models.contains_key(*k))
            .map(|(&s, k)| (s, k.clone()))
            .collect();
        if !missing.is_empty() {
            let clips = self.train_clips()?;
            let this = &*self;
            let built: Vec<(String, TrainedModel)> = missing
                .par_iter()
                .map(|(seed, key)| {
                    if let Some(m) = this.load_cached(v, *seed, key) {
                        return Ok((key.clone(), m));
                    }
                    let out = train(&v.model, &clips, &TrainParams { seed: *seed, ..v.train.clone() })
                        .map_err(|e| e.in_stage(format!("train {} seed {seed}", v.name)))?;
                    let (ckpt, curve) = this.cache_paths(v, *seed, key);
                    std::fs::create_dir_all(ckpt.parent().expect("cache dir"))?;
                    out.checkpoint.save(&ckpt)?;
                    std::fs::write(&curve, serde_json::to_string(&out.curve)?)?;
                    Ok((
                        key.clone(),
                        TrainedModel {
                            variant: v.name.clone(),
                            seed: *seed,
                            model: out.checkpoint.model()?,
                            curve: out.curve,
                        },
                    ))
                })
                .collect::<Result<_>>()?;
            for (k, m) in built {
                self.models.insert(k, Arc::new(m));
            }
        }
        Ok(keys.iter().map(|k| self.models[k].clone()).collect())
    }

    pub fn request(&self, clip: &Clip, seed: u64, guidance: GuidanceConfig) -> SampleRequest {
        SampleRequest {
            init_latent: clip.latents.frame(0).to_vec(),
            audio: clip.features.tensor().clone(),
            class_id: clip.script.class_id(),
            seed: seed.wrapping_mul(1_000_003).wrapping_add(clip.index as u64),
            guidance,
            skip_blocks: Vec::new(),
        }
    }

    fn guidance(&self, mode: SampleMode) -> GuidanceConfig {
        match mode {
            SampleMode::Guided { w_audio } => GuidanceConfig {
                w_audio,
                ..self.cfg.guidance.clone()
            },
            SampleMode::Offsync => self.cfg.guidance.clone(),
        }
    }

    /// Scores of `model` sampled in `mode` on every held-out clip.
    pub fn scores(&mut self, model: &TrainedModel, mode: SampleMode) -> Result<Arc<Vec<ClipScore>>> {
        let key = format!(
            "{}|{}|{}",
            model.variant,
            model.seed,
            mode.key()
        );
        if let Some(s) = self.scores.get(&key) {
            return Ok(s.clone());
        }
        let clips = self.eval_clips()?;
        let guidance = self.guidance(mode);
        let cs = self.cfg.metric.cyclesync();
        let cap = self.cfg.metric.mae_cap_s;
        let this = &*self;
        let scores: Vec<ClipScore> = clips
            .par_iter()
            .map(|clip| {
                let req = this.request(clip, model.seed, guidance.clone());
                let s = match mode {
                    SampleMode::Guided { .. } => sample(&model.model, &req),
                    SampleMode::Offsync => sample_offsync(&model.model, &req),
                }
                .map_err(|e| e.in_stage(format!("sample {}", clip.id)))?;
                let score = cyclesync(&clip.audio, &s.latents, this.backend(), &cs)
                    .map_err(|e| Error::Backend {
                        clip: clip.id.clone(),
                        msg: e.to_string(),
                    })?
                    .score;
                let (mae_s, n) = onset_mae(&clip.script.times(), &s.latents, cap)?;
                Ok(ClipScore {
                    clip_id: clip.id.clone(),
                    cyclesync: score,
                    mae_s,
                    n_motion_peaks: n,
                })
            })
            .collect::<Result<_>>()?;
        let scores = Arc::new(scores);
        self.scores.insert(key, scores.clone());
        Ok(scores)
    }

    /// Block-skip probes of `model` averaged over the first `n_clips`
    /// held-out clips.
    pub fn block_probes(&mut self, model: &TrainedModel, n_clips: usize) -> Result<Vec<BlockProbe>> {
        let clips = self.eval_clips()?;
        let guidance = self.cfg.guidance.clone();
        let per_clip: Vec<Vec<BlockProbe>> = clips
            .par_iter()
            .take(n_clips.max(1))
            .map(|clip| skip_block_sweep(&model.model, &self.request(clip, model.seed, guidance.clone())))
            .collect::<Result<_>>()?;
        let n = per_clip.len() as f64;
        let blocks = model.model.config.n_blocks;
        Ok((0..blocks)
            .map(|b| BlockProbe {
                block: b,
                divergence_l2: per_clip.iter().map(|r| r[b].divergence_l2).sum::<f64>() / n,
                first_frame_mse: per_clip.iter().map(|r| r[b].first_frame_mse).sum::<f64>() / n,
            })
            .collect())
    }
}
