//! Renders a scripted clip, writes it as 16-bit WAV, reads it back and
//! detects onsets.

use synclab::audio_dsp::{detect_onsets, load_wav, write_wav};
use synclab::synth_world::{generate_clip, DatasetParams};

fn main() -> synclab::Result<()> {
    let clip = generate_clip(&DatasetParams::default(), 3)?;
    let dir = std::env::temp_dir().join("synclab-onsets");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.wav", clip.id));
    write_wav(&path, &clip.audio)?;
    let audio = load_wav(&path)?;

    let peaks = detect_onsets(&audio)?;
    println!("{} ({:.2} s) written to {}", clip.id, audio.duration_s(), path.display());
    println!("scripted events: {:?}", clip.script.times());
    println!("detected onsets: {:?}", peaks.times());
    Ok(())
}
