use synclab::audio_dsp::{detect_onsets, pick_peaks, OnsetPeaks};
use synclab::diffcore::Rng;
use synclab::sync_metrics::{cyclesync, motion_series, CycleSyncParams, V2ABackend};
use synclab::synth_world::*;

fn event(time_s: f64, lead: f64, lag: f64) -> Event {
    Event {
        time_s,
        class_id: 1,
        motion_lead_s: lead,
        motion_lag_s: lag,
        amplitude: 1.0,
    }
}

fn script(times: &[f64]) -> EventScript {
    EventScript::new(2.0, times.iter().map(|&t| event(t, 0.0, 0.0)).collect()).unwrap()
}

fn nearest(peaks: &OnsetPeaks, t: f64) -> f64 {
    peaks.times().iter().map(|p| (p - t).abs()).fold(f64::INFINITY, f64::min)
}

#[test]
fn empty_script_audio_has_no_peaks() {
    let audio = gen_audio(&EventScript::empty(2.0), &AudioParams::default(), &mut Rng::new(1)).unwrap();
    assert!(detect_onsets(&audio.waveform).unwrap().is_empty());
}

#[test]
fn audio_onsets_land_on_event_times() {
    let times = [0.25, 0.75, 1.25];
    for seed in 0..5 {
        let audio = gen_audio(&script(&times), &AudioParams::default(), &mut Rng::new(seed)).unwrap();
        let peaks = detect_onsets(&audio.waveform).unwrap();
        assert_eq!(peaks.len(), 3, "seed {seed}: {:?}", peaks.times());
        for &t in &times {
            assert!(nearest(&peaks, t) <= 0.010, "seed {seed}: {t} vs {:?}", peaks.times());
        }
    }
}

#[test]
fn zero_amplitude_events_are_silent() {
    let mut s = script(&[0.5, 1.0]);
    for e in &mut s.events {
        e.amplitude = 0.0;
    }
    let a = gen_audio(&s, &AudioParams::default(), &mut Rng::new(3)).unwrap();
    let b = gen_audio(&EventScript::empty(2.0), &AudioParams::default(), &mut Rng::new(3)).unwrap();
    assert_eq!(a.waveform, b.waveform);
}

#[test]
fn empty_script_motion_has_no_peaks() {
    for seed in 0..10 {
        let v = gen_latents(&EventScript::empty(2.0), &LatentParams::default(), &mut Rng::new(seed)).unwrap();
        let m = motion_series(&v).unwrap();
        assert!(pick_peaks(&m, &motion_peak_params()).unwrap().is_empty());
    }
}

#[test]
fn motion_argmax_within_one_frame_of_event() {
    for seed in 0..10 {
        let v = gen_latents(&script(&[1.0]), &LatentParams::default(), &mut Rng::new(seed)).unwrap();
        assert_eq!(v.n_frames(), 48);
        let m = motion_series(&v).unwrap();
        let t = m.time_of(m.argmax().unwrap());
        assert!((t - 1.0).abs() <= 1.0 / 24.0, "seed {seed}: {t}");
    }
}

#[test]
fn lead_moves_motion_onset_earlier() {
    let s = EventScript::new(2.0, vec![event(1.0, 0.2, 0.0)]).unwrap();
    let mut params = LatentParams::default();
    params.drift_amplitude = 0.0;
    let v = gen_latents(&s, &params, &mut Rng::new(5)).unwrap();
    let m = motion_series(&v).unwrap();
    let max = m.values.iter().cloned().fold(0.0, f64::max);
    let first = m.values.iter().position(|&x| x > 0.1 * max).unwrap();
    let onset = m.time_of(first);
    assert!((onset - 0.8).abs() <= 1.0 / 24.0, "onset {onset}");
}

#[test]
fn features_run_at_four_per_frame() {
    for duration in [1.0, 2.0, 2.5] {
        let audio = gen_audio(&EventScript::empty(duration), &AudioParams::default(), &mut Rng::new(0)).unwrap();
        let f = gen_audio_features(&audio.waveform).unwrap();
        let v = gen_latents(&EventScript::empty(duration), &LatentParams::default(), &mut Rng::new(0)).unwrap();
        assert_eq!(f.len(), 4 * v.n_frames());
        assert_eq!(f.dim(), FEATURE_DIM);
    }
}

#[test]
fn silence_features_are_constant_and_deterministic() {
    let w = synclab::audio_dsp::Waveform::silence(1.0, 16_000);
    let f = gen_audio_features(&w).unwrap();
    let first = f.tensor().row(0).to_vec();
    for i in 0..f.len() {
        assert_eq!(f.tensor().row(i), &first[..]);
    }
    assert_eq!(f, gen_audio_features(&w).unwrap());
}

#[test]
fn zero_motion_reconstructs_no_peaks() {
    let v = LatentSequence::new(synclab::diffcore::Tensor::full(&[48, 8], 0.2), 24.0).unwrap();
    let rec = OracleV2A::default().reconstruct(&v).unwrap();
    assert!(detect_onsets(&rec).unwrap().is_empty());
    let audio = gen_audio(&script(&[0.5, 1.0]), &AudioParams::default(), &mut Rng::new(0)).unwrap();
    let out = cyclesync(&audio.waveform, &v, &OracleV2A::default(), &CycleSyncParams::default()).unwrap();
    assert_eq!(out.score, 0.0);
}

#[test]
fn oracle_round_trip_recovers_events() {
    let v = gen_latents(&script(&[0.5, 1.0]), &LatentParams::default(), &mut Rng::new(2)).unwrap();
    let peaks = detect_onsets(&OracleV2A::default().reconstruct(&v).unwrap()).unwrap();
    assert_eq!(peaks.len(), 2, "{:?}", peaks.times());
    for t in [0.5, 1.0] {
        assert!(nearest(&peaks, t) <= 1.0 / 24.0, "{t} vs {:?}", peaks.times());
    }
}

#[test]
fn shifting_latents_by_three_frames_shifts_reconstruction() {
    let v = gen_latents(&script(&[0.5, 1.0]), &LatentParams::default(), &mut Rng::new(2)).unwrap();
    let oracle = OracleV2A::default();
    let a = oracle.motion_peaks(&v).unwrap();
    let b = oracle.motion_peaks(&v.shifted_frames(3)).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.times().iter().zip(b.times()) {
        assert!((y - x - 0.125).abs() < 1e-9, "{x} -> {y}");
    }
    let pa = detect_onsets(&oracle.reconstruct(&v).unwrap()).unwrap();
    let pb = detect_onsets(&oracle.reconstruct(&v.shifted_frames(3)).unwrap()).unwrap();
    for (x, y) in pa.times().iter().zip(pb.times()) {
        assert!((y - x - 0.125).abs() <= 0.016, "{x} -> {y}");
    }
}

#[test]
fn zero_lag_round_trip_scores_high() {
    let params = DatasetParams {
        n_clips: 32,
        script: ScriptParams::default().zero_lag(),
        ..DatasetParams::default()
    };
    let clips = generate_clips(&params).unwrap();
    let oracle = OracleV2A::default();
    let mut total = 0.0;
    for clip in &clips {
        total += cyclesync(&clip.audio, &clip.latents, &oracle, &CycleSyncParams::default()).unwrap().score;
    }
    let mean = total / clips.len() as f64;
    assert!(mean >= 0.95, "mean {mean}");
}

#[test]
fn zero_lag_motion_and_audio_peaks_agree() {
    let params = DatasetParams {
        script: ScriptParams::default().zero_lag(),
        ..DatasetParams::default()
    };
    let oracle = OracleV2A::default();
    let mut offsets = Vec::new();
    for clip in generate_clips(&params).unwrap() {
        let audio = detect_onsets(&clip.audio).unwrap();
        for &t in oracle.motion_peaks(&clip.latents).unwrap().times() {
            offsets.push(nearest(&audio, t));
        }
    }
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    assert!(mean < 1.0 / 24.0, "mean offset {mean}");
}

#[test]
fn datasets_are_reproducible() {
    let params = DatasetParams {
        n_clips: 6,
        ..DatasetParams::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let rows = gen_dataset(&params, a.path()).unwrap();
    gen_dataset(&params, b.path()).unwrap();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        for f in [&row.wav, &row.latents, &row.features, &row.script] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
    }
    assert_eq!(
        std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
        std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
    );
    let dir = DatasetDir::open(a.path()).unwrap();
    let loaded = dir.load_clip(2).unwrap();
    let fresh = generate_clip(&params, 2).unwrap();
    assert_eq!(loaded.audio, fresh.audio);
    assert_eq!(loaded.latents, fresh.latents);
    assert_eq!(loaded.script, fresh.script);
}

#[test]
fn manifest_has_a_row_per_clip() {
    let dir = tempfile::tempdir().unwrap();
    let rows = gen_dataset(&DatasetParams::default(), dir.path()).unwrap();
    assert_eq!(rows.len(), 64);
    assert_eq!(read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap(), rows);
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let params = DatasetParams {
        n_clips: 1,
        ..DatasetParams::default()
    };
    assert!(gen_dataset(&params, &blocker.join("sub")).is_err());
}
