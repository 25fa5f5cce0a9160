//! Reverse-mode differentiation over a linear recording tape.
//!
//! A [`Tape`] is a single-owner recording scope. Values created on it are
//! referenced by [`Var`] handles; [`Tape::backward`] walks the tape in reverse
//! once and leaves `dLoss/dLeaf` for every leaf created with [`Tape::param`].

use std::cell::{Cell, Ref, RefCell};
use std::fmt;

use super::tensor::{gemm, Mat, Tensor};
use crate::error::{Error, Result};

/// Backward rule for an operation whose forward pass is computed by the caller.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input (in input order); `None` means zero.
    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], output: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MatMul(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    Mean(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    SliceRows { input: usize, start: usize },
    Softmax { input: usize, axis: usize },
    Silu(usize),
    LayerNorm { input: usize, inv_std: Vec<f64> },
    Custom { inputs: Vec<usize>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded recording scope.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Tensor>>>,
    done: Cell<bool>,
    id: u64,
}

/// Handle to a recorded value.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(tape={}, id={}, shape={:?})", self.tape.id, self.id, self.shape())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        use std::sync::atomic::{AtomicU64, Ordering};
        static NEXT: AtomicU64 = AtomicU64::new(1);
        Tape {
            nodes: RefCell::new(Vec::new()),
            grads: RefCell::new(Vec::new()),
            done: Cell::new(false),
            id: NEXT.fetch_add(1, Ordering::Relaxed),
        }
    }

    /// Identifier of this recording scope (the `tape_id` of its values).
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Differentiable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn check_same(&self, v: Var<'_>) {
        assert!(
            std::ptr::eq(self, v.tape),
            "vars from different tapes cannot be combined"
        );
    }

    /// Records an operation whose forward value was computed by the caller.
    pub fn custom<'t>(&'t self, inputs: &[Var<'t>], output: Tensor, op: Box<dyn CustomOp>) -> Var<'t> {
        inputs.iter().for_each(|v| self.check_same(*v));
        let requires = inputs.iter().any(|v| self.requires(v.id));
        let ids = inputs.iter().map(|v| v.id).collect();
        self.push(output, Op::Custom { inputs: ids, op }, requires)
    }

    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        parts.iter().for_each(|v| self.check_same(*v));
        let value = {
            let vals: Vec<Ref<'_, Tensor>> = parts.iter().map(|v| self.value(v.id)).collect();
            let refs: Vec<&Tensor> = vals.iter().map(|r| &**r).collect();
            Tensor::concat(&refs, axis)?
        };
        let requires = parts.iter().any(|v| self.requires(v.id));
        let inputs = parts.iter().map(|v| v.id).collect();
        Ok(self.push(value, Op::Concat { inputs, axis }, requires))
    }

    /// Runs reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        self.check_same(loss);
        if self.done.get() {
            return Err(Error::Autodiff(
                "backward already ran on this tape; start a new tape".into(),
            ));
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::Autodiff(format!(
                "loss must be scalar, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.requires_grad {
            return Err(Error::Autodiff(
                "loss does not depend on any recorded parameter".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(root.value.shape(), 1.0));

        let accumulate = |grads: &mut Vec<Option<Tensor>>, id: usize, g: Tensor| {
            if !nodes[id].requires_grad {
                return;
            }
            match &mut grads[id] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(val(*b))?;
                    let gb = g.mul(val(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(x, bias) => {
                    let (rows, cols) = g.rows_cols();
                    let mut gb = vec![0.0; cols];
                    for r in 0..rows {
                        for (acc, v) in gb.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    let gb = Tensor::new(val(*bias).shape().to_vec(), gb)?;
                    accumulate(&mut grads, *bias, gb);
                    accumulate(&mut grads, *x, g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    if nodes[*a].requires_grad {
                        let mut ga = vec![0.0; m * k];
                        gemm(Mat::new(g.data(), m, n), Mat::new(bv.data(), k, n).t(), &mut ga, false);
                        accumulate(&mut grads, *a, Tensor::new(vec![m, k], ga)?);
                    }
                    if nodes[*b].requires_grad {
                        let mut gb = vec![0.0; k * n];
                        gemm(Mat::new(av.data(), m, k).t(), Mat::new(g.data(), m, n), &mut gb, false);
                        accumulate(&mut grads, *b, Tensor::new(vec![k, n], gb)?);
                    }
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.scale(*k)),
                Op::Sum(a) => {
                    let shape = val(*a).shape().to_vec();
                    accumulate(&mut grads, *a, Tensor::full(&shape, g.item()));
                }
                Op::Mean(a) => {
                    let x = val(*a);
                    let k = g.item() / x.len() as f64;
                    accumulate(&mut grads, *a, Tensor::full(x.shape(), k));
                }
                Op::Concat { inputs, axis } => {
                    let (outer, _, inner) = g.axis_split(*axis);
                    let total = g.shape()[*axis];
                    let mut offset = 0;
                    for &i in inputs {
                        let part = val(i);
                        let len = part.shape()[*axis];
                        let mut data = Vec::with_capacity(part.len());
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            data.extend_from_slice(&g.data()[base..base + len * inner]);
                        }
                        offset += len;
                        accumulate(&mut grads, i, Tensor::new(part.shape().to_vec(), data)?);
                    }
                }
                Op::SliceRows { input, start } => {
                    let x = val(*input);
                    let stride = x.len() / x.shape()[0];
                    let mut data = vec![0.0; x.len()];
                    data[start * stride..start * stride + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *input, Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::Softmax { input, axis } => {
                    let y = &node.value;
                    let (outer, len, inner) = y.axis_split(*axis);
                    let mut gx = vec![0.0; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| (o * len + j) * inner + i;
                            let dot: f64 = (0..len).map(|j| g.data()[idx(j)] * y.data()[idx(j)]).sum();
                            for j in 0..len {
                                gx[idx(j)] = y.data()[idx(j)] * (g.data()[idx(j)] - dot);
                            }
                        }
                    }
                    accumulate(&mut grads, *input, Tensor::new(y.shape().to_vec(), gx)?);
                }
                Op::Silu(a) => {
                    let x = val(*a);
                    let data = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &g)| {
                            let s = sigmoid(x);
                            g * s * (1.0 + x * (1.0 - s))
                        })
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::LayerNorm { input, inv_std } => {
                    let y = &node.value;
                    let (rows, cols) = y.rows_cols();
                    let mut gx = vec![0.0; y.len()];
                    for r in 0..rows {
                        let gy = g.row(r);
                        let yr = y.row(r);
                        let mean_g = gy.iter().sum::<f64>() / cols as f64;
                        let mean_gy = gy.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for c in 0..cols {
                            gx[r * cols + c] = inv_std[r] * (gy[c] - mean_g - yr[c] * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *input, Tensor::new(y.shape().to_vec(), gx)?);
                }
                Op::Custom { inputs, op } => {
                    let ins: Vec<&Tensor> = inputs.iter().map(|&i| val(i)).collect();
                    let gs = op.backward(&g, &ins, &node.value);
                    if gs.len() != inputs.len() {
                        return Err(Error::Autodiff(format!(
                            "{} returned {} gradients for {} inputs",
                            op.name(),
                            gs.len(),
                            inputs.len()
                        )));
                    }
                    for (&i, gi) in inputs.iter().zip(gs) {
                        if let Some(gi) = gi {
                            accumulate(&mut grads, i, gi);
                        }
                    }
                }
            }
        }
        *self.grads.borrow_mut() = grads;
        self.done.set(true);
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var<'_>) -> Option<Tensor> {
        self.check_same(v);
        let grads = self.grads.borrow();
        match grads.get(v.id) {
            Some(Some(g)) => Some(g.clone()),
            Some(None) if self.done.get() && self.requires(v.id) => {
                Some(Tensor::zeros(self.value(v.id).shape()))
            }
            _ => None,
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(self.id).clone()
    }

    /// Borrowed access to the recorded value.
    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.value(self.id))
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value(self.id).shape().to_vec()
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.tape.grad(*self)
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        let requires = self.tape.requires(self.id);
        self.tape.push(value, op, requires)
    }

    fn binary(self, other: Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        self.tape.check_same(other);
        let requires = self.tape.requires(self.id) || self.tape.requires(other.id);
        self.tape.push(value, op, requires)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.tape.value(self.id).add(&self.tape.value(other.id))?;
        Ok(self.binary(other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.tape.value(self.id).sub(&self.tape.value(other.id))?;
        Ok(self.binary(other, v, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.tape.value(self.id).mul(&self.tape.value(other.id))?;
        Ok(self.binary(other, v, Op::Mul(self.id, other.id)))
    }

    /// Adds a length-`cols` bias to every row.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        let v = {
            let x = self.tape.value(self.id);
            let b = self.tape.value(bias.id);
            let (rows, cols) = x.rows_cols();
            if b.len() != cols {
                return Err(Error::shape("add_row", x.shape(), b.shape()));
            }
            let mut out = x.clone();
            for r in 0..rows {
                for (o, bv) in out.row_mut(r).iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
            out
        };
        Ok(self.binary(bias, v, Op::AddRow(self.id, bias.id)))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.tape.value(self.id).matmul(&self.tape.value(other.id))?;
        Ok(self.binary(other, v, Op::MatMul(self.id, other.id)))
    }

    pub fn scale(self, k: f64) -> Var<'t> {
        let v = self.tape.value(self.id).scale(k);
        self.unary(v, Op::Scale(self.id, k))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.tape.value(self.id).sum());
        self.unary(v, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let v = Tensor::scalar(self.tape.value(self.id).mean());
        self.unary(v, Op::Mean(self.id))
    }

    pub fn square(self) -> Result<Var<'t>> {
        self.mul(self)
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let v = self.tape.value(self.id).softmax(axis)?;
        Ok(self.unary(v, Op::Softmax { input: self.id, axis }))
    }

    pub fn silu(self) -> Var<'t> {
        let v = self.tape.value(self.id).map(|x| x * sigmoid(x));
        self.unary(v, Op::Silu(self.id))
    }

    /// Normalizes each row to zero mean and unit variance (no affine terms).
    pub fn layer_norm(self, eps: f64) -> Var<'t> {
        let (v, inv_std) = {
            let x = self.tape.value(self.id);
            let (rows, cols) = x.rows_cols();
            let mut out = x.clone();
            let mut inv_std = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = out.row_mut(r);
                let mean = row.iter().sum::<f64>() / cols as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
                let inv = 1.0 / (var + eps).sqrt();
                row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
                inv_std.push(inv);
            }
            (out, inv_std)
        };
        self.unary(v, Op::LayerNorm { input: self.id, inv_std })
    }

    pub fn slice_rows(self, start: usize, end: usize) -> Result<Var<'t>> {
        let v = self.tape.value(self.id).slice_rows(start, end)?;
        Ok(self.unary(v, Op::SliceRows { input: self.id, start }))
    }

    pub fn concat_last(self, other: Var<'t>) -> Result<Var<'t>> {
        let axis = self.with_value(|t| t.rank() - 1);
        self.tape.concat(&[self, other], axis)
    }

    /// Mean squared difference.
    pub fn mse(self, target: Var<'t>) -> Result<Var<'t>> {
        Ok(self.sub(target)?.square()?.mean())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![3.0]));
        let loss = x.square().unwrap().sum();
        tape.backward(loss).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_grad() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        let c = tape.constant(Tensor::scalar(5.0));
        let loss = x.scale(0.0).sum().add(c).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_twice_is_error() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0]));
        let loss = x.sum();
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::Autodiff(_))));
    }

    #[test]
    fn non_scalar_and_unrecorded_losses_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(tape.backward(x).is_err());
        let tape = Tape::new();
        let c = tape.constant(Tensor::scalar(1.0));
        assert!(tape.backward(c).is_err());
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![2.0]));
        let y = x.add(x).unwrap().mul(x).unwrap().sum(); // 2x^2
        tape.backward(y).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[8.0]);
    }
}
