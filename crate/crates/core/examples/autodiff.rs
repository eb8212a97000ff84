// The reverse-mode tape on its own: a tiny regression loss and its
// gradient, plus gradient injection at an intermediate value.
//
// ```bash
// cargo run --example autodiff
// ```

use nft::diffcore::{Tape, Tensor};

pub fn run_example() -> nft::Result<()> {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]])?);
    let w = tape.param(Tensor::from_rows(&[vec![0.3], vec![-0.2]])?);
    let b = tape.param(Tensor::vector(vec![0.1])?);

    let z = tape.matmul(x, w)?;
    let z = tape.add_bias(z, b)?;
    let y = tape.tanh(z);
    let sq = tape.mul(y, y)?;
    let loss = tape.sum(sq);
    tape.backward(loss)?;
    println!("loss = {:.6}", tape.value(loss).item().expect("scalar"));
    println!("dloss/dw = {:?}", tape.grad(w).expect("param").data());
    println!("dloss/db = {:?}", tape.grad(b).expect("param").data());

    // Seeding y directly gives the same gradients as backward from loss,
    // since dloss/dy = 2y.
    let seed: Vec<f64> = tape.value(y).data().iter().map(|v| 2.0 * v).collect();
    let from_loss = tape.grad(w).expect("param").clone();
    tape.zero_grad();
    tape.inject_gradient(y, &seed)?;
    tape.backward_injected()?;
    let injected = tape.grad(w).expect("param");
    assert!(injected.max_abs_diff(&from_loss) < 1e-15);
    println!("injected seed reproduces the gradient");
    Ok(())
}

#[allow(dead_code)]
fn main() -> nft::Result<()> {
    run_example()
}
