//! Reverse-mode gradients of a small tanh layer, checked against central
//! differences.
//!
//! ```text
//! cargo run --example autodiff
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zslab::tensor::{Graph, Tensor};

fn loss(x: &Tensor<f64>, w: &Tensor<f64>) -> zslab::Result<(f64, Graph<f64>, zslab::tensor::Var)> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = g.param(w.clone());
    let y = g.linear(xv, wv, None)?;
    let a = g.tanh(y);
    let l = g.sum_squares(a);
    g.backward(l)?;
    Ok((g.value(l).item(), g, wv))
}

fn main() -> zslab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::from_fn(vec![4, 3], |_| rng.gen_range(-1.0..1.0));
    let w = Tensor::from_fn(vec![2, 3], |_| rng.gen_range(-1.0..1.0));
    let (value, g, wv) = loss(&x, &w)?;
    let grad = g.grad(wv).expect("w is a parameter").clone();
    println!("loss {value:.6}");
    println!("{:>3} {:>12} {:>12}", "i", "backward", "numeric");
    let h = 1e-5;
    for i in 0..w.numel() {
        let (mut up, mut down) = (w.clone(), w.clone());
        up.data_mut()[i] += h;
        down.data_mut()[i] -= h;
        let numeric = (loss(&x, &up)?.0 - loss(&x, &down)?.0) / (2.0 * h);
        println!("{i:>3} {:>12.8} {numeric:>12.8}", grad.data()[i]);
    }
    Ok(())
}
