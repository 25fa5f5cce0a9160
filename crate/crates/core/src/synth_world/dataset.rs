use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    gen_audio, gen_audio_features, gen_latents, random_script, AudioFeatureSequence, AudioParams, EventScript,
    LatentParams, LatentSequence, ScriptParams,
};
use crate::audio_dsp::{decode_wav, encode_wav, load_wav, Waveform};
use crate::diffcore::{sptn, Rng};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    pub seed: u64,
    pub n_clips: usize,
    pub duration_s: f64,
    pub script: ScriptParams,
    pub audio: AudioParams,
    pub latents: LatentParams,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            seed: 7,
            n_clips: 64,
            duration_s: 2.0,
            script: ScriptParams::default(),
            audio: AudioParams::default(),
            latents: LatentParams::default(),
        }
    }
}

/// One synthetic clip held in memory.
#[derive(Clone, Debug)]
pub struct Clip {
    pub id: String,
    pub index: usize,
    pub script: EventScript,
    pub audio: Waveform,
    pub latents: LatentSequence,
    pub features: AudioFeatureSequence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub wav: String,
    pub latents: String,
    pub features: String,
    pub script: String,
}

pub fn clip_id(index: usize) -> String {
    format!("clip_{index:04}")
}

/// Independent generator streams of one clip: script, audio, latents.
pub fn clip_rngs(seed: u64, index: usize) -> [Rng; 3] {
    let base = index as u64 * 4;
    [
        Rng::for_stream(seed, base),
        Rng::for_stream(seed, base + 1),
        Rng::for_stream(seed, base + 2),
    ]
}

/// Deterministic clip `index` of the dataset; audio is quantized to 16-bit
/// so an in-memory clip equals its reloaded files.
pub fn generate_clip(params: &DatasetParams, index: usize) -> Result<Clip> {
    let [mut srng, mut arng, mut lrng] = clip_rngs(params.seed, index);
    let script = random_script(&mut srng, &params.script, params.duration_s)?;
    let audio = gen_audio(&script, &params.audio, &mut arng)?.waveform;
    let audio = decode_wav(&encode_wav(&audio))?;
    let latents = gen_latents(&script, &params.latents, &mut lrng)?;
    let features = gen_audio_features(&audio)?;
    Ok(Clip {
        id: clip_id(index),
        index,
        script,
        audio,
        latents,
        features,
    })
}

pub fn generate_clips(params: &DatasetParams) -> Result<Vec<Clip>> {
    if params.n_clips == 0 {
        return Err(Error::invalid("dataset needs at least one clip"));
    }
    (0..params.n_clips)
        .into_par_iter()
        .map(|i| generate_clip(params, i))
        .collect()
}

/// Writes every clip (wav, latents, features, script) plus `manifest.jsonl`.
pub fn gen_dataset(params: &DatasetParams, out_dir: &Path) -> Result<Vec<ManifestRow>> {
    let clips = generate_clips(params)?;
    std::fs::create_dir_all(out_dir)?;
    let rows = clips
        .par_iter()
        .map(|clip| write_clip(clip, out_dir))
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = std::io::BufWriter::new(std::fs::File::create(out_dir.join(MANIFEST_FILE))?);
    for row in &rows {
        serde_json::to_writer(&mut manifest, row)?;
        manifest.write_all(b"\n")?;
    }
    manifest.flush()?;
    Ok(rows)
}

fn write_clip(clip: &Clip, dir: &Path) -> Result<ManifestRow> {
    let row = ManifestRow {
        id: clip.id.clone(),
        wav: format!("{}.wav", clip.id),
        latents: format!("{}.latents.sptn", clip.id),
        features: format!("{}.features.sptn", clip.id),
        script: format!("{}.script.json", clip.id),
    };
    std::fs::write(dir.join(&row.wav), encode_wav(&clip.audio))?;
    sptn::save(&dir.join(&row.latents), clip.latents.tensor())?;
    sptn::save(&dir.join(&row.features), clip.features.tensor())?;
    std::fs::write(dir.join(&row.script), serde_json::to_vec_pretty(&clip.script)?)?;
    Ok(row)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for line in f.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok(rows)
}

/// A dataset on disk: manifest rows resolved against their directory.
pub struct DatasetDir {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl DatasetDir {
    pub fn open(root: &Path) -> Result<Self> {
        let rows = read_manifest(&root.join(MANIFEST_FILE))?;
        Ok(DatasetDir {
            root: root.to_path_buf(),
            rows,
        })
    }

    pub fn load_clip(&self, index: usize) -> Result<Clip> {
        let row = self
            .rows
            .get(index)
            .ok_or_else(|| Error::invalid(format!("no clip {index} in manifest")))?;
        let script: EventScript = serde_json::from_slice(&std::fs::read(self.root.join(&row.script))?)?;
        let audio = load_wav(&self.root.join(&row.wav))?;
        let latents = LatentSequence::new(sptn::load(&self.root.join(&row.latents))?, super::FRAME_RATE_HZ)?;
        let features = AudioFeatureSequence::new(
            sptn::load(&self.root.join(&row.features))?,
            super::FEATURE_RATE_HZ,
        )?;
        Ok(Clip {
            id: row.id.clone(),
            index,
            script,
            audio,
            latents,
            features,
        })
    }

    pub fn load_all(&self) -> Result<Vec<Clip>> {
        (0..self.rows.len()).into_par_iter().map(|i| self.load_clip(i)).collect()
    }
}
