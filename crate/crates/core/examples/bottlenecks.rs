//! The three discretizers applied to the same random encoder output: STE
//! binarization, nearest-codeword VQ and Gumbel-softmax CatVAE.
//!
//! ```text
//! cargo run --example bottlenecks
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zslab::bottleneck::{catvae_kl, catvae_sample, ste_binarize, vq_quantize, AnnealSchedule, Mode};
use zslab::evaluation::{codebook_utilization, entropy_bits, SymbolStream};
use zslab::tensor::{Graph, Tensor};

fn main() -> zslab::Result<()> {
    let (channels, frames, codes) = (5, 400, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = Tensor::from_fn(vec![1, channels, frames], |_| rng.gen_range(-1.0..1.0));

    let mut g = Graph::<f32>::new();
    let hv = g.param(h.clone());
    let ste = ste_binarize(&mut g, hv, Mode::Eval, &mut rng)?;
    summary("ste", &ste.symbol_ids, 1 << channels);

    let codebook = Tensor::from_fn(vec![codes, channels], |_| rng.gen_range(-1.0..1.0));
    let cv = g.param(codebook);
    let vq = vq_quantize(&mut g, hv, cv, 0.25)?;
    summary("vqvae", &vq.symbol_ids, codes);
    println!("        codebook + commitment {:.4}", g.value(vq.aux_loss).item());

    let logits = Tensor::from_fn(vec![1, codes, frames], |_| rng.gen_range(-2.0..2.0));
    let lv = g.param(logits);
    let schedule = AnnealSchedule::default();
    for step in [0, schedule.total_steps / 2, schedule.total_steps] {
        let tau = schedule.tau(step);
        let cat = catvae_sample(&mut g, lv, tau, Mode::Train, &mut rng)?;
        summary(&format!("catvae tau={tau:.2}"), &cat.symbol_ids, codes);
    }
    let kl = catvae_kl(&mut g, lv)?;
    println!(
        "        KL to uniform {:.4} nats per frame",
        g.value(kl).item() / frames as f32
    );
    Ok(())
}

fn summary(name: &str, ids: &[usize], alphabet: usize) {
    println!(
        "{name:<16} {} symbols, entropy {:.3} bits, utilization {:.3}",
        ids.len(),
        entropy_bits(ids),
        codebook_utilization(&SymbolStream::new(ids.to_vec(), 1.0).expect("non-empty"), alphabet)
    );
}
