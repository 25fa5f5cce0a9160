use synclab::audio_dsp::{encode_wav, Waveform};
use synclab::sync_metrics::*;
use synclab::synth_world::*;

fn zero_lag(n: usize) -> DatasetParams {
    DatasetParams {
        n_clips: n,
        script: ScriptParams::default().zero_lag(),
        ..DatasetParams::default()
    }
}

#[test]
fn delayed_video_scores_lower() {
    let params = zero_lag(8);
    let oracle = OracleV2A::default();
    for clip in generate_clips(&params).unwrap() {
        let aligned = cyclesync(&clip.audio, &clip.latents, &oracle, &CycleSyncParams::default()).unwrap();
        let late = delayed_latents(&clip, &params, 0.3).unwrap();
        let shifted = cyclesync(&clip.audio, &late, &oracle, &CycleSyncParams::default()).unwrap();
        assert!(shifted.score < aligned.score, "{}: {} vs {}", clip.id, shifted.score, aligned.score);
    }
}

#[test]
fn zero_delay_latents_match_the_clip() {
    let params = zero_lag(3);
    for clip in generate_clips(&params).unwrap() {
        assert_eq!(delayed_latents(&clip, &params, 0.0).unwrap(), clip.latents);
    }
}

#[test]
fn mismatched_durations_are_rejected() {
    let clip = generate_clip(&zero_lag(1), 0).unwrap();
    let short = Waveform::silence(1.0, 16_000);
    assert!(cyclesync(&short, &clip.latents, &OracleV2A::default(), &CycleSyncParams::default()).is_err());
}

#[test]
fn paper_mode_never_exceeds_f1() {
    let params = zero_lag(8);
    let oracle = OracleV2A::default();
    for clip in generate_clips(&params).unwrap() {
        let f1 = cyclesync(&clip.audio, &clip.latents, &oracle, &CycleSyncParams::default()).unwrap();
        let paper = CycleSyncParams {
            mode: ScoreMode::Paper,
            ..CycleSyncParams::default()
        };
        let p = cyclesync(&clip.audio, &clip.latents, &oracle, &paper).unwrap();
        assert!(p.score <= f1.score + 1e-12);
    }
}

#[test]
fn sweep_is_deterministic_and_anchored_at_zero() {
    let params = zero_lag(6);
    let clips = generate_clips(&params).unwrap();
    let cfg = SweepConfig::default();
    let a = delay_sweep(&clips, &params, &cfg, &OracleV2A::default()).unwrap();
    let b = delay_sweep(&clips, &params, &cfg, &OracleV2A::default()).unwrap();
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(a.report.rows.len(), 6 * 6 * 2);
    for metric in [SweepMetric::Cyclesync, SweepMetric::AvAlign] {
        assert_eq!(a.relative_row(metric, 0.0).unwrap().pct_change, 0.0);
    }
    assert!(a.drop_pct(SweepMetric::Cyclesync, 0.3).unwrap() > 0.0);
}

#[test]
fn sweep_rejects_delays_beyond_margin() {
    let params = zero_lag(1);
    let clips = generate_clips(&params).unwrap();
    let cfg = SweepConfig {
        delays_s: vec![0.0, 0.6],
        ..SweepConfig::default()
    };
    assert!(delay_sweep(&clips, &params, &cfg, &OracleV2A::default()).is_err());
}

#[test]
fn backend_names_resolve() {
    assert_eq!(backend_from_name("oracle").unwrap().name(), "oracle");
    assert_eq!(backend_from_name("external:cat").unwrap().name(), "external:cat");
    assert!(backend_from_name("external:").is_err());
    assert!(backend_from_name("vaura").is_err());
}

#[test]
fn external_backend_pipes_latents_and_reads_wav() {
    let params = zero_lag(1);
    let clip = generate_clip(&params, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("rec.wav");
    let rec = OracleV2A::default().reconstruct(&clip.latents).unwrap();
    std::fs::write(&wav, encode_wav(&rec)).unwrap();
    let seen = dir.path().join("seen.sptn");
    let cmd = format!("cat > '{}'; cat '{}'", seen.display(), wav.display());
    let backend = backend_from_name(&format!("external:{cmd}")).unwrap();
    let out = cyclesync(&clip.audio, &clip.latents, backend.as_ref(), &CycleSyncParams::default()).unwrap();
    let direct = cyclesync(&clip.audio, &clip.latents, &OracleV2A::default(), &CycleSyncParams::default()).unwrap();
    assert_eq!(out.score, direct.score);
    let sent = synclab::diffcore::sptn::load(&seen).unwrap();
    assert_eq!(&sent, clip.latents.tensor());
}

#[test]
fn failing_external_backend_is_an_error() {
    let clip = generate_clip(&zero_lag(1), 0).unwrap();
    let backend = backend_from_name("external:exit 3").unwrap();
    assert!(backend.reconstruct(&clip.latents).is_err());
    let garbage = backend_from_name("external:cat >/dev/null; echo nope").unwrap();
    assert!(garbage.reconstruct(&clip.latents).is_err());
}

#[test]
fn report_files_have_expected_shape() {
    let params = zero_lag(4);
    let clips = generate_clips(&params).unwrap();
    let r = delay_sweep(&clips, &params, &SweepConfig::default(), &OracleV2A::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    r.report.write_csv(&dir.path().join("r.csv")).unwrap();
    r.report.write_json(&dir.path().join("r.json")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "clip_id,metric,delay_s,score_x100");
    assert_eq!(csv.lines().count(), 1 + 4 * 6 * 2);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let first = &json.as_array().unwrap()[0];
    for key in ["metric", "delay", "mean", "ci95"] {
        assert!(first.get(key).is_some(), "{key}");
    }
}
