use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Loss value and its two components.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms<'t> {
    pub total: Var<'t>,
    pub mse: Var<'t>,
    pub motion: Var<'t>,
}

/// `mean((pred - gt)^2) + lambda * mean(((pred - gt) * (gt - gt_prev))^2)`.
pub fn motion_aware_loss<'t>(pred: Var<'t>, gt: Var<'t>, gt_prev: Var<'t>, lambda: f64) -> Result<LossTerms<'t>> {
    if pred.shape() != gt.shape() || gt.shape() != gt_prev.shape() {
        return Err(Error::shape("motion_aware_loss", &pred.shape(), &gt.shape()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let resid = pred.sub(gt)?;
    let mse = resid.square()?.mean();
    let motion = resid.mul(gt.sub(gt_prev)?)?.square()?.mean();
    let total = mse.add(motion.scale(lambda))?;
    Ok(LossTerms { total, mse, motion })
}

/// Scalar value of [`motion_aware_loss`].
pub fn motion_aware_loss_value(pred: &Tensor, gt: &Tensor, gt_prev: &Tensor, lambda: f64) -> Result<f64> {
    let tape = Tape::new();
    let terms = motion_aware_loss(
        tape.constant(pred.clone()),
        tape.constant(gt.clone()),
        tape.constant(gt_prev.clone()),
        lambda,
    )?;
    Ok(terms.total.value().item())
}
