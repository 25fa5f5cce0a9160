use std::sync::Arc;

use super::rope::{PositionIndex, RotaryEmbedder};
use super::segment::AudioSegment;
use crate::diffcore::{gemm, CustomOp, Mat, Tensor, Var};
use crate::error::{Error, Result};

/// Projections of one audio cross-attention layer (output projection and
/// residual are left to the caller).
#[derive(Clone, Debug)]
pub struct CrossAttentionParams {
    /// `d x d`
    pub w_q: Tensor,
    /// `feature_dim x d`
    pub w_k: Tensor,
    /// `feature_dim x d`
    pub w_v: Tensor,
    pub n_heads: usize,
    pub rope: Option<RotaryEmbedder>,
}

/// Attention of one latent frame `z_l` over an audio segment. The query is
/// rotated at `(l, 0, 0)` and key `i` at `(t_i, 0, 0)` by the same embedder;
/// values are the projected audio features.
pub fn audio_cross_attention(
    z_l: &[f64],
    l: f64,
    segment: &Tensor,
    positions: &[f64],
    params: &CrossAttentionParams,
) -> Result<Vec<f64>> {
    let (n, f) = segment.rows_cols();
    if n == 0 {
        return Err(Error::invalid("audio segment is empty"));
    }
    if positions.len() != n {
        return Err(Error::invalid(format!("{} positions for {n} features", positions.len())));
    }
    let d = params.w_q.shape()[1];
    if z_l.len() != params.w_q.shape()[0] || params.w_k.shape() != [f, d] || params.w_v.shape() != [f, d] {
        return Err(Error::invalid("cross-attention projection shapes do not match inputs"));
    }
    let q = Tensor::new(vec![1, z_l.len()], z_l.to_vec())?.matmul(&params.w_q)?;
    let k = segment.matmul(&params.w_k)?;
    let v = segment.matmul(&params.w_v)?;
    let dh = d / params.n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; d];
    for h in 0..params.n_heads {
        let cols = h * dh..(h + 1) * dh;
        let mut qh = q.data()[cols.clone()].to_vec();
        if let Some(rope) = &params.rope {
            rope.rotate(&mut qh, PositionIndex::frame(l));
        }
        let logits: Vec<f64> = (0..n)
            .map(|i| {
                let mut kh = k.row(i)[cols.clone()].to_vec();
                if let Some(rope) = &params.rope {
                    rope.rotate(&mut kh, PositionIndex::frame(positions[i]));
                }
                scale * qh.iter().zip(&kh).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let p = softmax(&logits);
        for i in 0..n {
            for (o, x) in out[cols.clone()].iter_mut().zip(&v.row(i)[cols.clone()]) {
                *o += p[i] * x;
            }
        }
    }
    Ok(out)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn softmax_rows_in_place(s: &mut [f64], n: usize) {
    for row in s.chunks_mut(n) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row.iter_mut().for_each(|x| *x /= sum);
    }
}

fn strided(data: &[f64], offset: usize, rows: usize, cols: usize, row_stride: usize) -> Mat<'_> {
    Mat {
        data: &data[offset..],
        rows,
        cols,
        row_stride: row_stride as isize,
        col_stride: 1,
    }
}

/// Multi-head self-attention over `batch` independent sequences of `seq`
/// tokens. Input rows are `[q | k | v]` (`3d` wide); output is `d` wide.
struct SelfAttention {
    batch: usize,
    seq: usize,
    heads: usize,
    d: usize,
    probs: Vec<f64>,
}

pub(crate) fn self_attention<'t>(qkv: Var<'t>, batch: usize, seq: usize, heads: usize) -> Result<Var<'t>> {
    let shape = qkv.shape();
    if shape.len() != 2 || shape[0] != batch * seq || shape[1] % (3 * heads) != 0 {
        return Err(Error::invalid(format!(
            "self-attention input {shape:?} does not fit batch {batch} x seq {seq}, {heads} heads"
        )));
    }
    let d = shape[1] / 3;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (out, probs) = qkv.with_value(|x| {
        let x = x.data();
        let mut out = vec![0.0; batch * seq * d];
        let mut probs = vec![0.0; batch * heads * seq * seq];
        let mut o = vec![0.0; seq * dh];
        for b in 0..batch {
            let base = b * seq * 3 * d;
            for h in 0..heads {
                let p = &mut probs[(b * heads + h) * seq * seq..][..seq * seq];
                let q = strided(x, base + h * dh, seq, dh, 3 * d);
                let k = strided(x, base + d + h * dh, seq, dh, 3 * d);
                let v = strided(x, base + 2 * d + h * dh, seq, dh, 3 * d);
                gemm(q, k.t(), p, false);
                p.iter_mut().for_each(|s| *s *= scale);
                softmax_rows_in_place(p, seq);
                gemm(Mat::new(p, seq, seq), v, &mut o, false);
                for i in 0..seq {
                    out[(b * seq + i) * d + h * dh..][..dh].copy_from_slice(&o[i * dh..][..dh]);
                }
            }
        }
        (out, probs)
    });
    let out = Tensor::new(vec![batch * seq, d], out)?;
    let op = SelfAttention {
        batch,
        seq,
        heads,
        d,
        probs,
    };
    Ok(qkv.tape().custom(&[qkv], out, Box::new(op)))
}

impl CustomOp for SelfAttention {
    fn name(&self) -> &'static str {
        "self_attention"
    }

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], _output: &Tensor) -> Vec<Option<Tensor>> {
        let (n, d, heads) = (self.seq, self.d, self.heads);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let x = inputs[0].data();
        let g = grad_out.data();
        let mut dx = vec![0.0; x.len()];
        let mut dp = vec![0.0; n * n];
        let mut tmp = vec![0.0; n * dh];
        for b in 0..self.batch {
            let base = b * n * 3 * d;
            for h in 0..heads {
                let p = &self.probs[(b * heads + h) * n * n..][..n * n];
                let q = strided(x, base + h * dh, n, dh, 3 * d);
                let k = strided(x, base + d + h * dh, n, dh, 3 * d);
                let v = strided(x, base + 2 * d + h * dh, n, dh, 3 * d);
                let go = strided(g, b * n * d + h * dh, n, dh, d);
                let scatter = |dx: &mut [f64], tmp: &[f64], col: usize| {
                    for i in 0..n {
                        dx[base + i * 3 * d + col..][..dh].copy_from_slice(&tmp[i * dh..][..dh]);
                    }
                };
                gemm(Mat::new(p, n, n).t(), go, &mut tmp, false);
                scatter(&mut dx, &tmp, 2 * d + h * dh);
                gemm(go, v.t(), &mut dp, false);
                for i in 0..n {
                    let pr = &p[i * n..][..n];
                    let dr = &mut dp[i * n..][..n];
                    let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                    for (ds, &pv) in dr.iter_mut().zip(pr) {
                        *ds = pv * (*ds - dot) * scale;
                    }
                }
                gemm(Mat::new(&dp, n, n), k, &mut tmp, false);
                scatter(&mut dx, &tmp, h * dh);
                gemm(Mat::new(&dp, n, n).t(), q, &mut tmp, false);
                scatter(&mut dx, &tmp, d + h * dh);
            }
        }
        vec![Some(Tensor::new(inputs[0].shape().to_vec(), dx).expect("shape"))]
    }
}

/// One query row of a segment cross-attention and the key rows it sees.
#[derive(Clone, Debug)]
pub(crate) struct CrossQuery {
    pub row: usize,
    pub position: f64,
    pub key_offset: usize,
    pub segment: AudioSegment,
}

/// Query/key layout of a batched segment cross-attention, shared by every
/// audio block of one forward pass.
#[derive(Clone, Debug)]
pub(crate) struct CrossPlan {
    pub queries: Vec<CrossQuery>,
    pub rope: Option<RotaryEmbedder>,
}

struct SegmentAttention {
    plan: Arc<CrossPlan>,
    heads: usize,
    probs: Vec<Vec<f64>>,
}

/// Per-head attention of each planned query row of `q` over its key
/// segment of `k`/`v`; rows without a query stay zero.
pub(crate) fn segment_attention<'t>(
    q: Var<'t>,
    k: Var<'t>,
    v: Var<'t>,
    plan: &Arc<CrossPlan>,
    heads: usize,
) -> Result<Var<'t>> {
    let (qs, ks) = (q.shape(), k.shape());
    if qs.len() != 2 || ks.len() != 2 || ks != v.shape() || qs[1] != ks[1] || qs[1] % heads != 0 {
        return Err(Error::invalid(format!("cross-attention shapes q {qs:?}, k {ks:?}")));
    }
    let (rows, d) = (qs[0], qs[1]);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    for cq in &plan.queries {
        if cq.row >= rows || cq.key_offset + cq.segment.end > ks[0] {
            return Err(Error::invalid("cross-attention plan exceeds input rows"));
        }
    }
    let mut out = vec![0.0; rows * d];
    let mut probs = Vec::with_capacity(plan.queries.len() * heads);
    {
        let (qt, kt, vt) = (q.value(), k.value(), v.value());
        let mut qh = vec![0.0; dh];
        let mut kh = vec![0.0; dh];
        for cq in &plan.queries {
            for h in 0..heads {
                qh.copy_from_slice(&qt.row(cq.row)[h * dh..][..dh]);
                if let Some(r) = &plan.rope {
                    r.rotate(&mut qh, PositionIndex::frame(cq.position));
                }
                let logits: Vec<f64> = (cq.segment.start..cq.segment.end)
                    .zip(&cq.segment.positions)
                    .map(|(i, &t)| {
                        kh.copy_from_slice(&kt.row(cq.key_offset + i)[h * dh..][..dh]);
                        if let Some(r) = &plan.rope {
                            r.rotate(&mut kh, PositionIndex::frame(t));
                        }
                        scale * qh.iter().zip(&kh).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                let p = softmax(&logits);
                let o = &mut out[cq.row * d + h * dh..][..dh];
                for (j, i) in (cq.segment.start..cq.segment.end).enumerate() {
                    for (ov, x) in o.iter_mut().zip(&vt.row(cq.key_offset + i)[h * dh..][..dh]) {
                        *ov += p[j] * x;
                    }
                }
                probs.push(p);
            }
        }
    }
    let out = Tensor::new(vec![rows, d], out)?;
    let op = SegmentAttention {
        plan: Arc::clone(plan),
        heads,
        probs,
    };
    Ok(q.tape().custom(&[q, k, v], out, Box::new(op)))
}

impl CustomOp for SegmentAttention {
    fn name(&self) -> &'static str {
        "segment_attention"
    }

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], _output: &Tensor) -> Vec<Option<Tensor>> {
        let (qt, kt, vt) = (inputs[0], inputs[1], inputs[2]);
        let d = qt.shape()[1];
        let heads = self.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = vec![0.0; qt.len()];
        let mut dk = vec![0.0; kt.len()];
        let mut dv = vec![0.0; vt.len()];
        let rope = self.plan.rope.as_ref();
        let mut qh = vec![0.0; dh];
        let mut dqh = vec![0.0; dh];
        let mut kh = vec![0.0; dh];
        let mut probs = self.probs.iter();
        for cq in &self.plan.queries {
            let pos = PositionIndex::frame(cq.position);
            for h in 0..heads {
                let p = probs.next().expect("one probability row per query head");
                let go = &grad_out.row(cq.row)[h * dh..][..dh];
                qh.copy_from_slice(&qt.row(cq.row)[h * dh..][..dh]);
                if let Some(r) = rope {
                    r.rotate(&mut qh, pos);
                }
                let keys = cq.segment.start..cq.segment.end;
                let dp: Vec<f64> = keys
                    .clone()
                    .map(|i| {
                        let vr = &vt.row(cq.key_offset + i)[h * dh..][..dh];
                        go.iter().zip(vr).map(|(a, b)| a * b).sum()
                    })
                    .collect();
                let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                dqh.iter_mut().for_each(|x| *x = 0.0);
                for (j, (i, &t)) in keys.zip(&cq.segment.positions).enumerate() {
                    let row = cq.key_offset + i;
                    for (x, g) in dv[row * d + h * dh..][..dh].iter_mut().zip(go) {
                        *x += p[j] * g;
                    }
                    let ds = p[j] * (dp[j] - dot) * scale;
                    kh.copy_from_slice(&kt.row(row)[h * dh..][..dh]);
                    let kpos = PositionIndex::frame(t);
                    if let Some(r) = rope {
                        r.rotate(&mut kh, kpos);
                    }
                    for (x, kv) in dqh.iter_mut().zip(&kh) {
                        *x += ds * kv;
                    }
                    let mut dkh: Vec<f64> = qh.iter().map(|x| ds * x).collect();
                    if let Some(r) = rope {
                        r.unrotate(&mut dkh, kpos);
                    }
                    for (x, g) in dk[row * d + h * dh..][..dh].iter_mut().zip(&dkh) {
                        *x += g;
                    }
                }
                if let Some(r) = rope {
                    r.unrotate(&mut dqh, pos);
                }
                for (x, g) in dq[cq.row * d + h * dh..][..dh].iter_mut().zip(&dqh) {
                    *x += g;
                }
            }
        }
        let t = |src: &Tensor, data: Vec<f64>| Some(Tensor::new(src.shape().to_vec(), data).expect("shape"));
        vec![t(qt, dq), t(kt, dk), t(vt, dv)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{finite_diff_check, sample_normal, Rng, Tape};
    use crate::toy_model::audio_segment;

    fn plan(frames: usize, alpha: usize, rope: bool, dh: usize) -> Arc<CrossPlan> {
        let n_audio = alpha * frames;
        let queries = (0..frames)
            .map(|l| CrossQuery {
                row: 1 + l,
                position: l as f64,
                key_offset: 0,
                segment: audio_segment(l, alpha, 1, n_audio),
            })
            .collect();
        Arc::new(CrossPlan {
            queries,
            rope: rope.then(|| RotaryEmbedder::new(dh, 10_000.0, 0).unwrap()),
        })
    }

    #[test]
    fn self_attention_gradient() {
        let mut rng = Rng::new(3);
        let x = sample_normal(&mut rng, &[2 * 5, 3 * 8]).unwrap();
        let w = sample_normal(&mut rng, &[2 * 5, 8]).unwrap();
        let err = finite_diff_check(
            |tape: &Tape, x| {
                let y = self_attention(x, 2, 5, 2)?;
                y.mul(tape.constant(w.clone()))?.sum().square()
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn self_attention_matches_reference() {
        let mut rng = Rng::new(4);
        let (n, d, heads) = (4, 8, 2);
        let x = sample_normal(&mut rng, &[n, 3 * d]).unwrap();
        let tape = Tape::new();
        let y = self_attention(tape.constant(x.clone()), 1, n, heads).unwrap().value();
        let dh = d / heads;
        for h in 0..heads {
            for i in 0..n {
                let q = &x.row(i)[h * dh..][..dh];
                let logits: Vec<f64> = (0..n)
                    .map(|j| q.iter().zip(&x.row(j)[d + h * dh..][..dh]).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let p = softmax(&logits);
                for c in 0..dh {
                    let want: f64 = (0..n).map(|j| p[j] * x.row(j)[2 * d + h * dh + c]).sum();
                    assert!((y.row(i)[h * dh + c] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn segment_attention_gradient() {
        for rope in [true, false] {
            let mut rng = Rng::new(5);
            let (frames, alpha, d, heads) = (3, 2, 8, 2);
            let p = plan(frames, alpha, rope, d / heads);
            let q = sample_normal(&mut rng, &[frames + 1, d]).unwrap();
            let kv = sample_normal(&mut rng, &[alpha * frames, 2 * d]).unwrap();
            let w = sample_normal(&mut rng, &[frames + 1, d]).unwrap();
            let kvc = kv.clone();
            let wc = w.clone();
            let pc = Arc::clone(&p);
            let err = finite_diff_check(
                move |tape: &Tape, q| {
                    let k = tape.constant(kvc.clone()).matmul(tape.constant(select(2 * d, 0, d)))?;
                    let v = tape.constant(kvc.clone()).matmul(tape.constant(select(2 * d, d, d)))?;
                    let y = segment_attention(q, k, v, &pc, heads)?;
                    y.mul(tape.constant(wc.clone()))?.sum().square()
                },
                &q,
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-5, "rope {rope}: q {err}");
            let qc = q.clone();
            let err = finite_diff_check(
                |tape: &Tape, kv| {
                    let k = kv.matmul(tape.constant(select(2 * d, 0, d)))?;
                    let v = kv.matmul(tape.constant(select(2 * d, d, d)))?;
                    let y = segment_attention(tape.constant(qc.clone()), k, v, &p, heads)?;
                    y.mul(tape.constant(w.clone()))?.sum().square()
                },
                &kv,
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-5, "rope {rope}: kv {err}");
        }
    }

    /// `n x width` matrix picking columns `start..start+width`.
    fn select(n: usize, start: usize, width: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, width]);
        for j in 0..width {
            t.data_mut()[(start + j) * width + j] = 1.0;
        }
        t
    }

    #[test]
    fn segment_attention_matches_single_query_reference() {
        let mut rng = Rng::new(6);
        let (frames, alpha, d, f, heads) = (4, 4, 8, 3, 2);
        let params = CrossAttentionParams {
            w_q: sample_normal(&mut rng, &[d, d]).unwrap(),
            w_k: sample_normal(&mut rng, &[f, d]).unwrap(),
            w_v: sample_normal(&mut rng, &[f, d]).unwrap(),
            n_heads: heads,
            rope: Some(RotaryEmbedder::new(d / heads, 10_000.0, 0).unwrap()),
        };
        let z = sample_normal(&mut rng, &[frames + 1, d]).unwrap();
        let audio = sample_normal(&mut rng, &[alpha * frames, f]).unwrap();
        let p = plan(frames, alpha, true, d / heads);
        let tape = Tape::new();
        let q = tape.constant(z.matmul(&params.w_q).unwrap());
        let k = tape.constant(audio.matmul(&params.w_k).unwrap());
        let v = tape.constant(audio.matmul(&params.w_v).unwrap());
        let y = segment_attention(q, k, v, &p, heads).unwrap().value();
        assert!(y.row(0).iter().all(|&x| x == 0.0));
        for cq in &p.queries {
            let seg = audio.slice_rows(cq.segment.start, cq.segment.end).unwrap();
            let want = audio_cross_attention(z.row(cq.row), cq.position, &seg, &cq.segment.positions, &params).unwrap();
            for (a, b) in y.row(cq.row).iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
