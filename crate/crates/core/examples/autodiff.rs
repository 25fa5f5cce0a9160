//! Reverse-mode gradients on the tape, checked against finite differences.

use synclab::diffcore::{finite_diff_check, sample_normal, Rng, Tape};

fn main() -> synclab::Result<()> {
    let mut rng = Rng::new(1);
    let w = sample_normal(&mut rng, &[3, 4])?;
    let x = sample_normal(&mut rng, &[4, 2])?;
    let y = sample_normal(&mut rng, &[3, 2])?;

    let tape = Tape::new();
    let wv = tape.param(w.clone());
    let loss = wv.matmul(tape.constant(x.clone()))?.silu().mse(tape.constant(y.clone()))?;
    println!("loss = {:.6}", loss.value().item());
    tape.backward(loss)?;
    let g = wv.grad().expect("gradient");
    println!("dL/dW row 0 = {:?}", &g.data()[..4]);

    let err = finite_diff_check(
        |t, v| v.matmul(t.constant(x.clone()))?.silu().mse(t.constant(y.clone())),
        &w,
        1e-5,
    )?;
    println!("relative error against central differences: {err:.2e}");
    Ok(())
}
