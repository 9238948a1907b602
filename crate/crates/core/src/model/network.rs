//! Parameter layout and the forward pass of the encoder / bottleneck /
//! decoder stack, generic over the float type so it can be replayed in `f64`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::CodecConfig;
use crate::bottleneck::{self, BottleneckKind, BottleneckOutput, Mode};
use crate::error::{Error, Result};
use crate::tensor::{BatchNormStats, Bound, Float, Graph, ParamStore, Tensor, Var};

pub const MFCC_DIM: usize = 39;
pub const FBANK_DIM: usize = 45;
pub const RES_BLOCKS: usize = 2;

/// Batch-norm running statistics keyed by layer name.
pub type Buffers<F = f32> = BTreeMap<String, BatchNormStats<F>>;

fn uniform_tensor(shape: Vec<usize>, bound: f32, rng: &mut impl Rng) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
}

fn add_conv(
    params: &mut ParamStore<f32>,
    name: &str,
    weight_shape: Vec<usize>,
    fan_in: usize,
    bias_len: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let bound = 1.0 / (fan_in as f32).sqrt();
    params.insert(format!("{name}.weight"), uniform_tensor(weight_shape, bound, rng))?;
    params.insert(format!("{name}.bias"), uniform_tensor(vec![bias_len], bound, rng))?;
    Ok(())
}

fn add_res_block(
    params: &mut ParamStore<f32>,
    buffers: &mut Buffers,
    name: &str,
    ch: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    for i in 1..=2 {
        add_conv(params, &format!("{name}.conv{i}"), vec![ch, ch, 3], ch * 3, ch, rng)?;
        params.insert(format!("{name}.bn{i}.gamma"), Tensor::full(vec![ch], 1.0))?;
        params.insert(format!("{name}.bn{i}.beta"), Tensor::zeros(vec![ch]))?;
        buffers.insert(format!("{name}.bn{i}"), BatchNormStats::new(ch));
    }
    Ok(())
}

/// Fresh parameters: convolutions uniform in `±1/sqrt(fan_in)`, batch-norm
/// at identity, codebook uniform in `±1/K`, speaker embeddings standard normal.
pub fn init_params(cfg: &CodecConfig, num_speakers: usize, rng: &mut impl Rng) -> Result<(ParamStore<f32>, Buffers)> {
    let mut p = ParamStore::new();
    let mut buf = Buffers::new();
    let c = cfg.channels;
    let d = cfg.latent_dim();

    add_conv(&mut p, "encoder.pre", vec![c, MFCC_DIM, 3], MFCC_DIM * 3, c, rng)?;
    for i in 0..cfg.downsample_layers() {
        add_conv(&mut p, &format!("encoder.down{i}"), vec![c, c, 4], c * 4, c, rng)?;
    }
    for j in 0..RES_BLOCKS {
        add_res_block(&mut p, &mut buf, &format!("encoder.res{j}"), c, rng)?;
    }
    add_conv(&mut p, "encoder.proj", vec![d, c, 1], c, d, rng)?;

    if cfg.bottleneck == BottleneckKind::Vqvae {
        let cb = bottleneck::Codebook::init_uniform(cfg.num_symbols, cfg.embed_dim, rng)?;
        p.insert("bottleneck.codebook", cb.embeddings)?;
    }

    let e = cfg.speaker_embed_dim;
    if e > 0 {
        let table = Tensor::from_fn(vec![num_speakers, e], |_| rng.sample::<f32, _>(StandardNormal));
        p.insert("decoder.speaker_embedding", table)?;
    }
    add_conv(&mut p, "decoder.pre", vec![c, d + e, 3], (d + e) * 3, c, rng)?;
    for j in 0..RES_BLOCKS {
        add_res_block(&mut p, &mut buf, &format!("decoder.res{j}"), c, rng)?;
    }
    for i in 0..cfg.downsample_layers() {
        // Transposed-conv weights are [C_in, C_out, K].
        add_conv(&mut p, &format!("decoder.up{i}"), vec![c, c, 4], c * 4, c, rng)?;
    }
    add_conv(&mut p, "decoder.out", vec![FBANK_DIM, c, 1], c, FBANK_DIM, rng)?;
    Ok((p, buf))
}

/// Parameters, graph handles and running statistics for one forward pass.
pub struct Net<'a, F: Float> {
    pub cfg: &'a CodecConfig,
    pub params: &'a ParamStore<F>,
    pub bound: &'a Bound,
    pub buffers: &'a mut Buffers<F>,
    pub train: bool,
}

impl<F: Float> Net<'_, F> {
    fn var(&self, name: &str) -> Var {
        self.bound.var(self.params, name)
    }

    fn conv(&self, g: &mut Graph<F>, x: Var, name: &str, stride: usize, pad: usize) -> Result<Var> {
        let (w, b) = (self.var(&format!("{name}.weight")), self.var(&format!("{name}.bias")));
        g.conv1d(x, w, Some(b), stride, pad)
    }

    fn bn(&mut self, g: &mut Graph<F>, x: Var, name: &str) -> Result<Var> {
        let (gamma, beta) = (self.var(&format!("{name}.gamma")), self.var(&format!("{name}.beta")));
        let stats = self
            .buffers
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("missing batch-norm statistics {name:?}")))?;
        g.batch_norm(x, gamma, beta, stats, self.train)
    }

    fn res_block(&mut self, g: &mut Graph<F>, x: Var, name: &str) -> Result<Var> {
        let y = self.conv(g, x, &format!("{name}.conv1"), 1, 1)?;
        let y = self.bn(g, y, &format!("{name}.bn1"))?;
        let y = g.relu(y);
        let y = self.conv(g, y, &format!("{name}.conv2"), 1, 1)?;
        let y = self.bn(g, y, &format!("{name}.bn2"))?;
        let y = g.add(x, y)?;
        Ok(g.relu(y))
    }

    /// `[B, 39, T] -> [B, D, T / factor]`; tanh-squashed for STE, raw
    /// embeddings for VQ-VAE, logits for CatVAE.
    pub fn encode(&mut self, g: &mut Graph<F>, x: Var) -> Result<Var> {
        let y = self.conv(g, x, "encoder.pre", 1, 1)?;
        let mut y = g.relu(y);
        for i in 0..self.cfg.downsample_layers() {
            y = self.conv(g, y, &format!("encoder.down{i}"), 2, 1)?;
            y = g.relu(y);
        }
        for j in 0..RES_BLOCKS {
            y = self.res_block(g, y, &format!("encoder.res{j}"))?;
        }
        let h = self.conv(g, y, "encoder.proj", 1, 0)?;
        Ok(match self.cfg.bottleneck {
            BottleneckKind::Ste => g.tanh(h),
            _ => h,
        })
    }

    pub fn discretize(
        &mut self,
        g: &mut Graph<F>,
        h: Var,
        mode: Mode,
        tau: f64,
        rng: &mut impl Rng,
    ) -> Result<BottleneckOutput> {
        match self.cfg.bottleneck {
            BottleneckKind::Ste => bottleneck::ste_binarize(g, h, mode, rng),
            BottleneckKind::Vqvae => {
                let cb = self.var("bottleneck.codebook");
                bottleneck::vq_quantize(g, h, cb, F::from_f64c(self.cfg.beta))
            }
            BottleneckKind::Catvae => bottleneck::catvae_sample(g, h, tau, mode, rng),
        }
    }

    /// `[B, D, N] -> [B, 45, N * factor]`, conditioned on one speaker per item
    /// when the model has a speaker table.
    pub fn decode(&mut self, g: &mut Graph<F>, z: Var, speakers: &[usize]) -> Result<Var> {
        let &[batch, _, n] = g.shape(z) else {
            return Err(Error::shape(format!(
                "decoder input must be [B, D, N], got {:?}",
                g.shape(z)
            )));
        };
        let input = if self.cfg.speaker_embed_dim > 0 {
            if speakers.len() != batch {
                return Err(Error::invalid(format!(
                    "{} speaker ids for a batch of {batch}",
                    speakers.len()
                )));
            }
            let table = self.var("decoder.speaker_embedding");
            let emb = g.embed_broadcast(table, speakers, n)?;
            g.concat_channels(&[z, emb])?
        } else {
            z
        };
        let y = self.conv(g, input, "decoder.pre", 1, 1)?;
        let mut y = g.relu(y);
        for j in 0..RES_BLOCKS {
            y = self.res_block(g, y, &format!("decoder.res{j}"))?;
        }
        for i in 0..self.cfg.downsample_layers() {
            let name = format!("decoder.up{i}");
            let (w, b) = (self.var(&format!("{name}.weight")), self.var(&format!("{name}.bias")));
            y = g.conv_transpose1d(y, w, Some(b), 2, 1)?;
            y = g.relu(y);
        }
        self.conv(g, y, "decoder.out", 1, 0)
    }
}

/// Casts running statistics to another float type.
pub fn cast_buffers<F: Float, G: Float>(b: &Buffers<F>) -> Buffers<G> {
    b.iter().map(|(k, v)| (k.clone(), v.cast())).collect()
}
