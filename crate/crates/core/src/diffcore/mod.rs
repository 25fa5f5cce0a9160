//! Dense `f64` tensors, a reverse-mode tape, seeded randomness and the
//! `SPTN` tensor blob format.

mod check;
mod rng;
pub mod sptn;
mod tape;
mod tensor;

pub use check::finite_diff_check;
pub use rng::{sample_normal, Rng};
pub use tape::{CustomOp, Tape, Var};
pub use tensor::Tensor;
pub(crate) use tensor::{gemm, Mat};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;

    fn rand_tensor(seed: u64, shape: &[usize]) -> Tensor {
        sample_normal(&mut Rng::new(seed), shape).unwrap()
    }

    #[test]
    fn linear_function_is_exact() {
        let x = rand_tensor(1, &[3, 4]);
        let err = finite_diff_check(|_, v| Ok(v.sum()), &x, 1e-5).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    // identity forward with a gradient off by 1% on one coordinate
    struct SkewedIdentity;

    impl CustomOp for SkewedIdentity {
        fn name(&self) -> &'static str {
            "skewed_identity"
        }

        fn backward(&self, grad_out: &Tensor, _: &[&Tensor], _: &Tensor) -> Vec<Option<Tensor>> {
            let mut g = grad_out.clone();
            g.data_mut()[0] *= 1.01;
            vec![Some(g)]
        }
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let x = rand_tensor(11, &[2, 3]);
        let err = finite_diff_check(
            |t, v| t.custom(&[v], v.value(), Box::new(SkewedIdentity)).square().map(|s| s.sum()),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err > 1e-4, "{err}");
    }

    #[test]
    fn zero_true_gradient_is_not_an_error() {
        // softmax ignores a shift shared by a row, so every coordinate of the
        // gradient is zero and finite differences return round-off only
        let x = rand_tensor(12, &[3, 1]);
        let w = rand_tensor(13, &[3, 3]);
        let err = finite_diff_check(
            |t, v| {
                let shift = v.concat_last(v)?.concat_last(v)?;
                let logits = t.constant(w.clone()).add(shift)?;
                logits.softmax(1)?.mul(t.constant(w.clone())).map(|s| s.sum())
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_eps_rejected() {
        let x = rand_tensor(1, &[2]);
        assert!(finite_diff_check(|_, v| Ok(v.sum()), &x, 0.0).is_err());
    }

    #[test]
    fn mse_of_linear_map_matches_fd() {
        let w = rand_tensor(2, &[3, 4]).scale(0.5);
        let x = rand_tensor(3, &[4, 2]);
        let y = rand_tensor(4, &[3, 2]);
        let err = finite_diff_check(
            |t, wv| {
                let xv = t.constant(x.clone());
                let yv = t.constant(y.clone());
                wv.matmul(xv)?.mse(yv)
            },
            &w,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    // Every differentiable op, checked against central differences.
    #[test]
    fn every_op_matches_fd() {
        let x = rand_tensor(5, &[3, 4]);
        let other = rand_tensor(6, &[3, 4]);
        let square = rand_tensor(7, &[4, 4]);
        let bias = rand_tensor(8, &[4]);
        let weights = rand_tensor(9, &[3, 4]);
        let cases: Vec<(&str, Box<dyn for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>>)> = vec![
            ("add", Box::new(|t, v| v.add(t.constant(other.clone()))?.square().map(|s| s.sum()))),
            ("sub", Box::new(|t, v| t.constant(other.clone()).sub(v)?.square().map(|s| s.sum()))),
            ("mul", Box::new(|t, v| v.mul(t.constant(other.clone())).map(|s| s.sum()))),
            ("matmul_lhs", Box::new(|t, v| v.matmul(t.constant(square.clone()))?.square().map(|s| s.mean()))),
            ("add_row", Box::new(|t, v| v.add_row(t.constant(bias.clone()))?.square().map(|s| s.sum()))),
            ("scale_mean", Box::new(|_, v| Ok(v.scale(-2.5).square()?.mean()))),
            ("softmax_last", Box::new(|t, v| v.softmax(1)?.mul(t.constant(weights.clone())).map(|s| s.sum()))),
            ("softmax_first", Box::new(|t, v| v.softmax(0)?.mul(t.constant(weights.clone())).map(|s| s.sum()))),
            ("silu", Box::new(|t, v| v.silu().mul(t.constant(weights.clone())).map(|s| s.sum()))),
            ("layer_norm", Box::new(|t, v| v.layer_norm(1e-5).mul(t.constant(weights.clone())).map(|s| s.sum()))),
            ("slice_concat", Box::new(|t, v| {
                let a = v.slice_rows(0, 1)?;
                let b = v.slice_rows(2, 3)?;
                t.concat(&[b, a, b], 0)?.square().map(|s| s.sum())
            })),
            ("concat_last", Box::new(|_, v| v.concat_last(v.scale(3.0))?.square().map(|s| s.mean()))),
        ];
        for (name, f) in &cases {
            let err = finite_diff_check(|t, v| f(t, v), &x, 1e-5).unwrap();
            assert!(err < 1e-6, "{name}: {err}");
        }
        // matmul gradient with respect to the right operand
        let a = rand_tensor(10, &[2, 3]);
        let err = finite_diff_check(
            |t, v| t.constant(a.clone()).matmul(v)?.square().map(|s| s.sum()),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "matmul_rhs: {err}");
    }

    #[test]
    fn tape_replay_is_deterministic() {
        let run = || {
            let tape = Tape::new();
            let w = tape.param(rand_tensor(11, &[4, 4]));
            let x = tape.constant(rand_tensor(12, &[3, 4]));
            let y = x.matmul(w).unwrap().silu().softmax(1).unwrap().square().unwrap().mean();
            tape.backward(y).unwrap();
            (y.value(), w.grad().unwrap())
        };
        assert_eq!(run(), run());
    }
}
