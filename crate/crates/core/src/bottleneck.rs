//! Discretization layers: stochastic binarization with a straight-through
//! gradient, nearest-codebook vector quantization, and the Gumbel-softmax
//! relaxation of a categorical latent.
//!
//! All layers take encoder output laid out as `[B, D, N]` (or `[D, N]`) and
//! report symbol ids in `(b, n)` order.

use rand::Rng;
use rand_distr::{Distribution, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{bct, Float, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BottleneckKind {
    Ste,
    Vqvae,
    Catvae,
}

impl std::fmt::Display for BottleneckKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BottleneckKind::Ste => "ste",
            BottleneckKind::Vqvae => "vqvae",
            BottleneckKind::Catvae => "catvae",
        })
    }
}

impl std::str::FromStr for BottleneckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ste" => Ok(BottleneckKind::Ste),
            "vqvae" | "vq-vae" | "vq" => Ok(BottleneckKind::Vqvae),
            "catvae" | "cat" => Ok(BottleneckKind::Catvae),
            other => Err(Error::invalid(format!(
                "unknown bottleneck {other:?} (ste | vqvae | catvae)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub struct BottleneckOutput {
    /// Discretized latents, same layout as the input.
    pub z: Var,
    pub symbol_ids: Vec<usize>,
    /// Codebook + commitment for VQ-VAE, KL for CatVAE, zero for STE.
    pub aux_loss: Var,
}

/// Linear temperature schedule from `tau_start` to `tau_end`, then constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub tau_start: f64,
    pub tau_end: f64,
    pub total_steps: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            tau_start: 1.0,
            tau_end: 0.1,
            total_steps: 40_000,
        }
    }
}

impl AnnealSchedule {
    pub fn tau(&self, step: u64) -> f64 {
        if step >= self.total_steps {
            return self.tau_end;
        }
        let frac = step as f64 / self.total_steps as f64;
        self.tau_start + (self.tau_end - self.tau_start) * frac
    }
}

/// `K x d` prototype vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub embeddings: Tensor<f32>,
}

impl Codebook {
    pub fn new(embeddings: Tensor<f32>) -> Result<Self> {
        match *embeddings.shape() {
            [k, d] if k >= 2 && d >= 1 => {}
            ref s => return Err(Error::shape(format!("codebook must be K x d with K >= 2, got {s:?}"))),
        }
        if !embeddings.all_finite() {
            return Err(Error::invalid("codebook has non-finite entries"));
        }
        Ok(Self { embeddings })
    }

    /// Entries drawn uniformly from `[-1/K, 1/K]`.
    pub fn init_uniform(codes: usize, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let bound = 1.0 / codes as f32;
        Self::new(Tensor::from_fn(vec![codes, dim], |_| rng.gen_range(-bound..=bound)))
    }

    pub fn len(&self) -> usize {
        self.embeddings.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.shape()[1]
    }
}

fn zero_loss<F: Float>(g: &mut Graph<F>) -> Var {
    g.constant(Tensor::scalar(F::zero()))
}

/// Packs a `±1` column into an integer, dimension `k` as bit `k`.
pub fn sign_bits_to_id(signs: impl IntoIterator<Item = bool>) -> usize {
    signs
        .into_iter()
        .enumerate()
        .fold(0, |acc, (k, pos)| acc | (usize::from(pos) << k))
}

/// Stochastic binarization `z = h + eps`, with `z = +1` at probability
/// `(1 + h) / 2`. Eval mode thresholds at zero (`h = 0` maps to `+1`).
/// The backward pass copies `dL/dz` into `dL/dh`.
pub fn ste_binarize<F: Float>(g: &mut Graph<F>, h: Var, mode: Mode, rng: &mut impl Rng) -> Result<BottleneckOutput> {
    let (batch, bits, n) = bct(g.shape(h), "ste_binarize")?;
    if bits >= usize::BITS as usize {
        return Err(Error::invalid(format!("{bits} bits do not fit a symbol id")));
    }
    let hv = g.value(h);
    if let Some(bad) = hv.data().iter().find(|v| !(v.abs() <= F::one())) {
        return Err(Error::Contract(format!(
            "ste_binarize input must lie in [-1, 1], found {}",
            bad.to_f64c()
        )));
    }
    let half = F::from_f64c(0.5);
    let z: Vec<F> = hv
        .data()
        .iter()
        .map(|&v| {
            let positive = match mode {
                Mode::Train => F::from_f64c(rng.gen::<f64>()) < (F::one() + v) * half,
                Mode::Eval => v >= F::zero(),
            };
            if positive {
                F::one()
            } else {
                -F::one()
            }
        })
        .collect();
    let mut ids = Vec::with_capacity(batch * n);
    for b in 0..batch {
        for t in 0..n {
            ids.push(sign_bits_to_id(
                (0..bits).map(|k| z[(b * bits + k) * n + t] > F::zero()),
            ));
        }
    }
    let zt = Tensor::new(hv.shape().to_vec(), z)?;
    let z = g.straight_through(h, zt)?;
    let aux_loss = zero_loss(g);
    Ok(BottleneckOutput {
        z,
        symbol_ids: ids,
        aux_loss,
    })
}

/// Index of the nearest codebook row for every position of `h[B, D, N]`;
/// ties go to the lowest index.
pub fn nearest_codes<F: Float>(h: &Tensor<F>, codebook: &Tensor<F>) -> Result<Vec<usize>> {
    let (batch, dim, n) = bct(h.shape(), "vq_quantize")?;
    let &[k, cd] = codebook.shape() else {
        return Err(Error::shape("codebook must be 2-d"));
    };
    if k == 0 {
        return Err(Error::invalid("codebook is empty"));
    }
    if cd != dim {
        return Err(Error::shape(format!(
            "latent dim {dim} does not match codebook dim {cd}"
        )));
    }
    let (hd, cb) = (h.data(), codebook.data());
    let mut ids = Vec::with_capacity(batch * n);
    let mut col = vec![F::zero(); dim];
    for b in 0..batch {
        for t in 0..n {
            for (d, c) in col.iter_mut().enumerate() {
                *c = hd[(b * dim + d) * n + t];
            }
            let mut best = (F::infinity(), 0);
            for j in 0..k {
                let dist: F = col
                    .iter()
                    .zip(&cb[j * dim..][..dim])
                    .map(|(&x, &e)| (x - e) * (x - e))
                    .sum();
                if dist < best.0 {
                    best = (dist, j);
                }
            }
            ids.push(best.1);
        }
    }
    Ok(ids)
}

/// Nearest-neighbour quantization against `codebook[K, D]`. The forward value
/// is the selected row; the decoder's gradient reaches `h` unchanged. The
/// auxiliary loss is `||sg(h) - z||^2 + beta ||h - sg(z)||^2` summed over
/// positions.
pub fn vq_quantize<F: Float>(g: &mut Graph<F>, h: Var, codebook: Var, beta: F) -> Result<BottleneckOutput> {
    let ids = nearest_codes(g.value(h), g.value(codebook))?;
    let shape = g.shape(h).to_vec();
    let z = g.row_lookup(codebook, &ids, &shape)?;
    finish_vq(g, h, z, ids, beta)
}

fn finish_vq<F: Float>(g: &mut Graph<F>, h: Var, z: Var, ids: Vec<usize>, beta: F) -> Result<BottleneckOutput> {
    let h_sg = g.stop_gradient(h);
    let diff = g.sub(h_sg, z)?;
    let codebook_term = g.sum_squares(diff);
    let z_sg = g.stop_gradient(z);
    let diff = g.sub(h, z_sg)?;
    let commit = g.sum_squares(diff);
    let commit = g.scale(commit, beta);
    let aux_loss = g.add(codebook_term, commit)?;
    let zv = g.value(z).clone();
    let z = g.straight_through(h, zv)?;
    Ok(BottleneckOutput {
        z,
        symbol_ids: ids,
        aux_loss,
    })
}

/// `(1 / (2 sigma^2)) * sum_t ||y_t - yhat_t||^2`, the Gaussian negative
/// log-likelihood without its constant.
pub fn reconstruction_nll<F: Float>(g: &mut Graph<F>, y: Var, y_hat: Var, sigma: f64) -> Result<Var> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let diff = g.sub(y, y_hat)?;
    let sse = g.sum_squares(diff);
    Ok(g.scale(sse, F::from_f64c(1.0 / (2.0 * sigma * sigma))))
}

/// Reconstruction NLL plus the (already beta-weighted) auxiliary loss.
pub fn vq_loss<F: Float>(g: &mut Graph<F>, y: Var, y_hat: Var, aux_loss: Var, sigma: f64) -> Result<Var> {
    let nll = reconstruction_nll(g, y, y_hat, sigma)?;
    g.add(nll, aux_loss)
}

fn argmax_ids<F: Float>(x: &Tensor<F>) -> Result<Vec<usize>> {
    let (batch, k, n) = bct(x.shape(), "argmax")?;
    let d = x.data();
    let mut ids = Vec::with_capacity(batch * n);
    for b in 0..batch {
        for t in 0..n {
            let mut best = (F::neg_infinity(), 0);
            for j in 0..k {
                let v = d[(b * k + j) * n + t];
                if v > best.0 {
                    best = (v, j);
                }
            }
            ids.push(best.1);
        }
    }
    Ok(ids)
}

/// One-hot columns for `ids` in a `[B, K, N]` tensor.
pub fn one_hot<F: Float>(ids: &[usize], classes: usize, batch: usize) -> Result<Tensor<F>> {
    if batch == 0 || !ids.len().is_multiple_of(batch) {
        return Err(Error::shape("one_hot: ids do not split into the batch"));
    }
    let n = ids.len() / batch;
    let mut out = vec![F::zero(); batch * classes * n];
    for b in 0..batch {
        for t in 0..n {
            let id = ids[b * n + t];
            if id >= classes {
                return Err(Error::invalid(format!("class {id} out of range 0..{classes}")));
            }
            out[(b * classes + id) * n + t] = F::one();
        }
    }
    Tensor::new(vec![batch, classes, n], out)
}

/// `softmax((logits + noise) / tau)` over the class axis.
pub fn gumbel_softmax_relax<F: Float>(g: &mut Graph<F>, logits: Var, noise: Tensor<F>, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let axis = g.shape(logits).len() - 2;
    let noise = g.constant(noise);
    let shifted = g.add(logits, noise)?;
    let scaled = g.scale(shifted, F::from_f64c(1.0 / tau));
    g.softmax(scaled, axis)
}

/// Gumbel-softmax sample from `logits = log pi` (`[B, K, N]`). Training mode
/// returns the relaxed one-hot; eval mode the exact one-hot at `argmax logits`.
/// The auxiliary loss is [`catvae_kl`].
pub fn catvae_sample<F: Float>(
    g: &mut Graph<F>,
    logits: Var,
    tau: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<BottleneckOutput> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let shape = g.shape(logits).to_vec();
    let (batch, classes, _) = bct(&shape, "catvae_sample")?;
    let aux_loss = catvae_kl(g, logits)?;
    match mode {
        Mode::Train => {
            let noise = Tensor::from_fn(shape, |_| {
                let u: f64 = Open01.sample(rng);
                F::from_f64c(-(-u.ln()).ln())
            });
            let z = gumbel_softmax_relax(g, logits, noise, tau)?;
            let symbol_ids = argmax_ids(g.value(z))?;
            Ok(BottleneckOutput {
                z,
                symbol_ids,
                aux_loss,
            })
        }
        Mode::Eval => {
            let symbol_ids = argmax_ids(g.value(logits))?;
            let hot = one_hot::<F>(&symbol_ids, classes, batch)?.reshape(shape)?;
            let z = g.constant(hot);
            Ok(BottleneckOutput {
                z,
                symbol_ids,
                aux_loss,
            })
        }
    }
}

/// `sum_positions sum_k pi_k (log pi_k - log(1/K))` with `pi = softmax(logits)`
/// over the class axis: the KL divergence to a uniform prior.
pub fn catvae_kl<F: Float>(g: &mut Graph<F>, logits: Var) -> Result<Var> {
    let shape = g.shape(logits).to_vec();
    let (_, classes, _) = bct(&shape, "catvae_kl")?;
    let axis = shape.len() - 2;
    let pi = g.softmax(logits, axis)?;
    let log_pi = g.log_softmax(logits, axis)?;
    let shifted = g.add_scalar(log_pi, F::from_f64c((classes as f64).ln()));
    let terms = g.mul(pi, shifted)?;
    Ok(g.sum(terms))
}
