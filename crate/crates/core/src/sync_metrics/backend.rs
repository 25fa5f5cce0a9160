use std::io::Write;
use std::process::{Command, Stdio};

use crate::audio_dsp::{decode_wav, Waveform};
use crate::diffcore::sptn;
use crate::error::{Error, Result};
use crate::synth_world::{LatentSequence, OracleV2A};

/// Video-to-audio reconstruction. Implementations must be deterministic.
pub trait V2ABackend: Send + Sync {
    fn name(&self) -> String;

    fn reconstruct(&self, v: &LatentSequence) -> Result<Waveform>;
}

/// Runs a shell command per clip: SPTN latents on stdin, a WAV file on stdout.
#[derive(Clone, Debug)]
pub struct ExternalV2A {
    pub command: String,
}

impl V2ABackend for ExternalV2A {
    fn name(&self) -> String {
        format!("external:{}", self.command)
    }

    fn reconstruct(&self, v: &LatentSequence) -> Result<Waveform> {
        let mut payload = Vec::new();
        sptn::write_tensor(&mut payload, v.tensor())?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // a command that ignores its input may close the pipe early
            let _ = stdin.write_all(&payload);
        }
        let out = child.wait_with_output()?;
        if !out.status.success() {
            return Err(Error::invalid(format!(
                "`{}` exited with {}: {}",
                self.command,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        decode_wav(&out.stdout)?.resample(crate::audio_dsp::DEFAULT_RATE_HZ)
    }
}

/// `"oracle"` or `"external:<command>"`.
pub fn backend_from_name(name: &str) -> Result<Box<dyn V2ABackend>> {
    if name == "oracle" {
        return Ok(Box::new(OracleV2A::default()));
    }
    if let Some(command) = name.strip_prefix("external:") {
        if command.trim().is_empty() {
            return Err(Error::Usage("external backend needs a command".into()));
        }
        return Ok(Box::new(ExternalV2A {
            command: command.to_string(),
        }));
    }
    Err(Error::Usage(format!(
        "unknown backend `{name}` (expected `oracle` or `external:<command>`)"
    )))
}
