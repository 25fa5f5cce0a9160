//! RIFF/WAVE PCM reading (8/16/24/32-bit integer) and 16-bit writing.

use std::io::Write;
use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

fn fmt_err(chunk: &str, msg: impl Into<String>) -> Error {
    Error::Format {
        chunk: chunk.to_string(),
        msg: msg.into(),
    }
}

struct FmtChunk {
    channels: u16,
    rate: u32,
    bits: u16,
}

pub fn load_wav(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path)?;
    decode_wav(&bytes)
}

/// Reads a WAV file and resamples it to `rate_hz` if needed.
pub fn load_wav_at(path: &Path, rate_hz: u32) -> Result<Waveform> {
    load_wav(path)?.resample(rate_hz)
}

pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 {
        return Err(fmt_err("RIFF", "truncated header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(fmt_err("RIFF", "missing RIFF magic"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(fmt_err("WAVE", "not a WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<FmtChunk> = None;
    while pos + 8 <= bytes.len() {
        let id = String::from_utf8_lossy(&bytes[pos..pos + 4]).into_owned();
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start + size;
        match id.as_str() {
            "fmt " => {
                if size < 16 || body_end > bytes.len() {
                    return Err(fmt_err("fmt ", "truncated format chunk"));
                }
                let b = &bytes[body_start..body_end];
                let tag = u16::from_le_bytes([b[0], b[1]]);
                let channels = u16::from_le_bytes([b[2], b[3]]);
                let rate = u32::from_le_bytes(b[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([b[14], b[15]]);
                let pcm = match tag {
                    1 => true,
                    0xFFFE if size >= 26 => u16::from_le_bytes([b[24], b[25]]) == 1,
                    _ => false,
                };
                if !pcm {
                    return Err(fmt_err("fmt ", format!("unsupported format tag {tag:#x}")));
                }
                if !matches!(bits, 8 | 16 | 24 | 32) {
                    return Err(fmt_err("fmt ", format!("unsupported bit depth {bits}")));
                }
                if channels == 0 || rate == 0 {
                    return Err(fmt_err("fmt ", "zero channels or rate"));
                }
                fmt = Some(FmtChunk { channels, rate, bits });
            }
            "data" => {
                let f = fmt.ok_or_else(|| fmt_err("data", "data chunk before fmt chunk"))?;
                if body_end > bytes.len() {
                    return Err(fmt_err("data", "truncated data chunk"));
                }
                return decode_samples(&bytes[body_start..body_end], &f);
            }
            _ => {}
        }
        pos = body_end + (size & 1);
    }
    Err(fmt_err(if fmt.is_some() { "data" } else { "fmt " }, "chunk not found"))
}

fn decode_samples(data: &[u8], f: &FmtChunk) -> Result<Waveform> {
    let width = (f.bits / 8) as usize;
    let channels = f.channels as usize;
    let frame = width * channels;
    let frames = data.len() / frame;
    let sample = |b: &[u8]| -> f64 {
        match f.bits {
            8 => (b[0] as f64 - 128.0) / 128.0,
            16 => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
            24 => {
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                v as f64 / 8_388_608.0
            }
            _ => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0,
        }
    };
    let samples = (0..frames)
        .map(|i| {
            let base = i * frame;
            let total: f64 = (0..channels)
                .map(|c| sample(&data[base + c * width..base + (c + 1) * width]))
                .sum();
            total / channels as f64
        })
        .collect();
    Waveform::new(samples, f.rate)
}

/// Encodes mono 16-bit PCM; samples are clamped to `[-1, 1]`.
pub fn encode_wav(w: &Waveform) -> Vec<u8> {
    let data_len = (w.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.rate_hz().to_le_bytes());
    out.extend_from_slice(&(w.rate_hz() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_wav(w))?;
    Ok(())
}
