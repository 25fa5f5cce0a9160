use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Relative disagreement between the tape gradient of `f` at `x` and central
/// finite differences with step `eps`:
/// `|analytic - fd| / max(|analytic|, |fd|, 1e-6)` in the Euclidean norm.
///
/// Measured over the whole tensor because coordinates whose true gradient
/// is zero get finite-difference round-off of about `ulp(f) / eps`, which no
/// per-coordinate ratio can tolerate.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("finite difference step must be > 0, got {eps}")));
    }
    let tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&tape, xv)?;
    let base = out.value();
    if !base.is_finite() {
        return Err(Error::NonFinite("objective at base point".into()));
    }
    tape.backward(out)?;
    let analytic = xv.grad().expect("gradient after backward");

    let eval = |p: &Tensor| -> Result<f64> {
        let t = Tape::new();
        let v = t.constant(p.clone());
        let y = f(&t, v)?.value().item();
        if !y.is_finite() {
            return Err(Error::NonFinite("objective at perturbed point".into()));
        }
        Ok(y)
    };

    let (mut diff, mut na, mut nf) = (0.0f64, 0.0f64, 0.0f64);
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        let a = analytic.data()[i];
        diff += (a - fd).powi(2);
        na += a * a;
        nf += fd * fd;
    }
    Ok(diff.sqrt() / na.max(nf).sqrt().max(1e-6))
}
