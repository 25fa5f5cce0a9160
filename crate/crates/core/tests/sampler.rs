use std::sync::OnceLock;

use synclab::diffcore::{sample_normal, Rng, Tensor};
use synclab::sampler::*;
use synclab::synth_world::{generate_clips, Clip, DatasetParams, NULL_CLASS};
use synclab::toy_model::*;

fn randn(seed: u64, shape: &[usize]) -> Tensor {
    sample_normal(&mut Rng::new(seed), shape).unwrap()
}

fn clips() -> &'static [Clip] {
    static CLIPS: OnceLock<Vec<Clip>> = OnceLock::new();
    CLIPS.get_or_init(|| generate_clips(&DatasetParams { n_clips: 8, ..DatasetParams::default() }).unwrap())
}

// Small model trained briefly so every branch carries signal.
fn model() -> &'static ToyModel {
    static MODEL: OnceLock<ToyModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = ModelConfig {
            n_blocks: 3,
            d_model: 16,
            n_heads: 2,
            audio_blocks: vec![2],
            ..ModelConfig::default()
        };
        let p = TrainParams { steps: 150, seed: 4, ..TrainParams::default() };
        train(&cfg, clips(), &p).unwrap().checkpoint.model().unwrap()
    })
}

fn request(guidance: GuidanceConfig) -> SampleRequest {
    let clip = &clips()[1];
    SampleRequest {
        init_latent: clip.latents.frame(0).to_vec(),
        audio: clip.features.tensor().clone(),
        class_id: clip.script.class_id(),
        seed: 11,
        guidance,
        skip_blocks: vec![],
    }
}

fn short() -> GuidanceConfig {
    GuidanceConfig { steps: 6, ..GuidanceConfig::default() }
}

#[test]
fn guided_prediction_scalar_example() {
    let one = |v: f64| Tensor::from_vec(vec![v]);
    let g = guided_prediction(&one(1.0), &one(0.6), &one(0.2), 2.0, 4.0).unwrap();
    assert!((g.item() - 5.0).abs() < 1e-12);
}

#[test]
fn guided_prediction_matches_recomputation() {
    let start = std::time::Instant::now();
    for i in 0..50u64 {
        let (f, o, n) = (randn(i, &[6, 8]), randn(i + 100, &[6, 8]), randn(i + 200, &[6, 8]));
        let (wa, wt) = (0.37 * i as f64 - 3.0, 7.0 - 0.21 * i as f64);
        let g = guided_prediction(&f, &o, &n, wa, wt).unwrap();
        for j in 0..f.len() {
            let (fv, ov, nv) = (f.data()[j], o.data()[j], n.data()[j]);
            let want = fv + wa * (fv - ov) + wt * (fv - nv);
            assert!((g.data()[j] - want).abs() <= 1e-12);
        }
        assert_eq!(guided_prediction(&f, &o, &n, 0.0, 0.0).unwrap(), f);
        assert_eq!(guided_prediction(&f, &f, &n, wa, wt).unwrap(), guided_prediction(&f, &f, &n, 0.0, wt).unwrap());
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn guided_prediction_is_affine_in_each_weight() {
    let (f, o, n) = (randn(1, &[5, 3]), randn(2, &[5, 3]), randn(3, &[5, 3]));
    let g = |wa: f64, wt: f64| guided_prediction(&f, &o, &n, wa, wt).unwrap();
    for w in [-2.0, 0.5, 3.0, 10.0] {
        let da = g(w, 1.5).sub(&g(0.0, 1.5)).unwrap();
        let unit_a = g(1.0, 1.5).sub(&g(0.0, 1.5)).unwrap().scale(w);
        let dt = g(0.7, w).sub(&g(0.7, 0.0)).unwrap();
        let unit_t = g(0.7, 1.0).sub(&g(0.7, 0.0)).unwrap().scale(w);
        for k in 0..f.len() {
            assert!((da.data()[k] - unit_a.data()[k]).abs() <= 1e-12);
            assert!((dt.data()[k] - unit_t.data()[k]).abs() <= 1e-12);
        }
    }
}

#[test]
fn guided_prediction_shape_mismatch() {
    let a = Tensor::zeros(&[2, 2]);
    let b = Tensor::zeros(&[2, 3]);
    assert!(guided_prediction(&a, &b, &a, 1.0, 1.0).is_err());
    assert!(guided_prediction(&a, &a, &b, 1.0, 1.0).is_err());
}

// Euler integration that always evaluates all three branches.
fn three_call_reference(model: &ToyModel, req: &SampleRequest, offsync: bool) -> Tensor {
    let cfg = &model.config;
    let frames = req.audio.shape()[0] / cfg.alpha;
    let first = cfg.flow_first_frame(&req.init_latent);
    let mut rng = Rng::for_stream(req.seed, NOISE_STREAM);
    let mut x = Tensor::new(vec![frames, cfg.latent_channels], rng.normals(frames * cfg.latent_channels)).unwrap();
    x.row_mut(0).copy_from_slice(&first);
    let zeros = Tensor::zeros(req.audio.shape());
    let dt = 1.0 / req.guidance.steps as f64;
    for k in 0..req.guidance.steps {
        let t = k as f64 * dt;
        let f = |cond| model.forward(&ForwardInput { latents: &x, t, cond }, &req.skip_blocks).unwrap();
        let (full, null, wa) = if offsync {
            (f(Conditioning::offsync(req.class_id)), f(Conditioning::offsync(NULL_CLASS)), 0.0)
        } else {
            (
                f(Conditioning::full(req.class_id, &req.audio)),
                f(Conditioning::full(NULL_CLASS, &zeros)),
                req.guidance.w_audio,
            )
        };
        let off = f(Conditioning::offsync(req.class_id));
        let v = guided_prediction(&full, &off, &null, wa, req.guidance.text_weight(k)).unwrap();
        for (xi, vi) in x.data_mut().iter_mut().zip(v.data()) {
            *xi += dt * vi;
        }
        x.row_mut(0).copy_from_slice(&first);
    }
    cfg.from_flow_space(&x, &req.init_latent)
}

#[test]
fn sampler_matches_three_call_reference() {
    let m = model();
    for g in [
        short(),
        GuidanceConfig { w_audio: 0.0, ..short() },
        GuidanceConfig { w_audio: 0.0, w_text: 0.0, w_text_first: 0.0, steps: 5 },
    ] {
        let req = request(g);
        assert_eq!(sample(m, &req).unwrap().latents.tensor(), &three_call_reference(m, &req, false));
        assert_eq!(sample_offsync(m, &req).unwrap().latents.tensor(), &three_call_reference(m, &req, true));
    }
}

#[test]
fn sampling_is_deterministic() {
    let req = request(short());
    let a = sample(model(), &req).unwrap();
    assert_eq!(a, sample(model(), &req).unwrap());
    let other = sample(model(), &SampleRequest { seed: 12, ..req.clone() }).unwrap();
    assert_ne!(a.latents, other.latents);
}

#[test]
fn sample_keeps_first_frame_and_length() {
    let req = request(short());
    let s = sample(model(), &req).unwrap();
    assert_eq!(s.latents.n_frames(), req.audio.shape()[0] / 4);
    for (a, b) in s.latents.frame(0).iter().zip(&req.init_latent) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(s.steps.len(), 6);
    assert!(s.steps.iter().all(|r| r.state_norm.is_finite()));
}

#[test]
fn offsync_sample_ignores_audio() {
    let req = request(short());
    let other = SampleRequest { audio: randn(5, req.audio.shape()), ..req.clone() };
    assert_eq!(sample_offsync(model(), &req).unwrap(), sample_offsync(model(), &other).unwrap());
    assert_ne!(sample(model(), &req).unwrap(), sample(model(), &other).unwrap());
}

#[test]
fn audio_weight_changes_full_sample() {
    let a = sample(model(), &request(short())).unwrap();
    let b = sample(model(), &request(GuidanceConfig { w_audio: 0.0, ..short() })).unwrap();
    assert_ne!(a.latents, b.latents);
}

#[test]
fn invalid_requests_rejected() {
    let m = model();
    let req = request(short());
    assert!(sample(m, &SampleRequest { init_latent: vec![0.0; 3], ..req.clone() }).is_err());
    assert!(sample(m, &SampleRequest { audio: Tensor::zeros(&[7, 16]), ..req.clone() }).is_err());
    assert!(sample(m, &SampleRequest { guidance: GuidanceConfig { steps: 0, ..short() }, ..req.clone() }).is_err());
    assert!(sample(m, &SampleRequest { guidance: GuidanceConfig { w_audio: f64::NAN, ..short() }, ..req.clone() }).is_err());
    assert!(skip_block_probe(m, &req, 3).is_err());
}

#[test]
fn skip_probe_rows_and_baseline() {
    let m = model();
    let req = request(short());
    let rows = skip_block_sweep(m, &req).unwrap();
    assert_eq!(rows.len(), m.config.n_blocks);
    let csv = block_probe_csv(&rows);
    assert_eq!(csv.lines().count(), m.config.n_blocks + 1);
    assert!(csv.starts_with("block,divergence_l2,first_frame_mse\n"));
    assert!(rows.iter().all(|r| r.divergence_l2 > 0.0));
    let (s, probe) = skip_block_probe(m, &req, 1).unwrap();
    assert_eq!(probe, rows[1]);
    assert_eq!(s, sample(m, &SampleRequest { skip_blocks: vec![1], ..req.clone() }).unwrap());
    // skipping nothing reproduces the baseline
    assert_eq!(sample(m, &SampleRequest { skip_blocks: vec![], ..req.clone() }).unwrap(), sample(m, &req).unwrap());
}

#[test]
fn write_sample_emits_latents_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let req = request(short());
    let s = sample(model(), &req).unwrap();
    write_sample(dir.path(), "clip", &req, &s).unwrap();
    let back = synclab::diffcore::sptn::load(&dir.path().join("clip.sptn")).unwrap();
    assert_eq!(&back, s.latents.tensor());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("clip.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 11);
    assert_eq!(json["steps"].as_array().unwrap().len(), 6);
    assert_eq!(json["guidance"]["w_audio"], 2.0);
}
