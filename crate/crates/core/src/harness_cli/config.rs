use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sampler::GuidanceConfig;
use crate::sync_metrics::{CycleSyncParams, ScoreMode, SweepConfig, DEFAULT_DELTA_S};
use crate::synth_world::DatasetParams;
use crate::toy_model::{ModelConfig, TrainParams};

pub const CONFIG_SCHEMA: &str = "synclab.experiment/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricParams {
    #[serde(default = "default_delta")]
    pub delta_s: f64,
    #[serde(default)]
    pub mode: ScoreMode,
    #[serde(default = "default_delays")]
    pub delays_s: Vec<f64>,
    /// `oracle` or `external:<command>`.
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Motion events farther than this from every sampled peak count as
    /// this error in the onset-timing MAE.
    #[serde(default = "default_mae_cap")]
    pub mae_cap_s: f64,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA_S
}

fn default_delays() -> Vec<f64> {
    SweepConfig::default().delays_s
}

fn default_backend() -> String {
    "oracle".into()
}

fn default_mae_cap() -> f64 {
    0.5
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            delta_s: default_delta(),
            mode: ScoreMode::F1,
            delays_s: default_delays(),
            backend: default_backend(),
            mae_cap_s: default_mae_cap(),
        }
    }
}

impl MetricParams {
    pub fn cyclesync(&self) -> CycleSyncParams {
        CycleSyncParams {
            delta_s: self.delta_s,
            mode: self.mode,
        }
    }
}

/// Everything an experiment run depends on. `seed` and `schema` are
/// mandatory in config files; every other field falls back to its default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default = "default_name")]
    pub name: String,
    /// Base seed; training run `k` uses `seed + k`.
    pub seed: u64,
    /// Number of training seeds aggregated by the training experiments.
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub dataset: DatasetParams,
    /// Held-out clips the trained models are sampled and scored on.
    #[serde(default = "default_eval_dataset")]
    pub eval_dataset: DatasetParams,
    /// Clips of the delay sweep; zero-lag scripts by default.
    #[serde(default = "default_sweep_dataset")]
    pub sweep_dataset: DatasetParams,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub guidance: GuidanceConfig,
    #[serde(default)]
    pub metric: MetricParams,
    /// Audio guidance weights compared by the ASG sweep.
    #[serde(default = "default_asg_weights")]
    pub asg_weights: Vec<f64>,
    /// Not part of the config hash.
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn default_name() -> String {
    "default".into()
}

fn default_n_seeds() -> usize {
    5
}

fn default_eval_dataset() -> DatasetParams {
    DatasetParams {
        seed: 1007,
        n_clips: 32,
        ..DatasetParams::default()
    }
}

fn default_sweep_dataset() -> DatasetParams {
    let base = DatasetParams::default();
    DatasetParams {
        script: base.script.clone().zero_lag(),
        ..base
    }
}

fn default_asg_weights() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 4.0]
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: CONFIG_SCHEMA.into(),
            name: default_name(),
            seed: 0,
            n_seeds: default_n_seeds(),
            dataset: DatasetParams::default(),
            eval_dataset: default_eval_dataset(),
            sweep_dataset: default_sweep_dataset(),
            model: ModelConfig::default(),
            train: TrainParams::default(),
            guidance: GuidanceConfig::default(),
            metric: MetricParams::default(),
            asg_weights: default_asg_weights(),
            out_dir: default_out(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Usage(format!("bad experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Usage(format!(
                "config schema `{}` is not supported (expected `{CONFIG_SCHEMA}`)",
                self.schema
            )));
        }
        if self.n_seeds == 0 {
            return Err(Error::Usage("n_seeds must be at least 1".into()));
        }
        for (what, d) in [("dataset", &self.dataset), ("eval_dataset", &self.eval_dataset), ("sweep_dataset", &self.sweep_dataset)] {
            if d.n_clips == 0 {
                return Err(Error::Usage(format!("{what}.n_clips must be at least 1")));
            }
        }
        if !(self.metric.delta_s > 0.0) {
            return Err(Error::Usage(format!("delta_s must be positive, got {}", self.metric.delta_s)));
        }
        self.model.validate().map_err(|e| Error::Usage(e.to_string()))?;
        self.guidance.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(())
    }

    /// Canonical JSON of the semantic fields: object keys sorted, output
    /// directory removed.
    pub fn canonical_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
        }
        Ok(serde_json::to_string(&value)?)
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json), hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?.as_bytes())))
    }

    /// Training parameters of seed run `k`.
    pub fn train_for(&self, k: usize) -> TrainParams {
        TrainParams {
            seed: self.seed + k as u64,
            ..self.train.clone()
        }
    }
}

/// Short stable digest of any serializable value.
pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_string(&serde_json::to_value(value)?)?;
    Ok(hex::encode(&Sha256::digest(json.as_bytes())[..8]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order_and_out_dir() {
        let a = r#"{"schema":"synclab.experiment/1","seed":3,"n_seeds":2}"#;
        let b = r#"{"n_seeds":2,"seed":3,"schema":"synclab.experiment/1","out_dir":"elsewhere"}"#;
        let (a, b) = (ExperimentConfig::from_json(a).unwrap(), ExperimentConfig::from_json(b).unwrap());
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn hash_tracks_semantic_fields() {
        let base = ExperimentConfig::default();
        let h = base.hash().unwrap();
        let mut other = base.clone();
        other.train.lambda = 0.0;
        assert_ne!(other.hash().unwrap(), h);
        let mut other = base.clone();
        other.metric.mode = ScoreMode::Paper;
        assert_ne!(other.hash().unwrap(), h);
        assert_eq!(base.clone().hash().unwrap(), h);
    }

    #[test]
    fn seed_and_schema_required() {
        assert!(ExperimentConfig::from_json(r#"{"schema":"synclab.experiment/1"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"seed":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema":"other/2","seed":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema":"synclab.experiment/1","seed":1,"bogus":1}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }
}
