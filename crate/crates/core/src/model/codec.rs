use rand::Rng;

use super::data::FeatureNorm;
use super::network::{init_params, Buffers, Net, FBANK_DIM, MFCC_DIM};
use super::CodecConfig;
use crate::bottleneck::{one_hot, BottleneckKind, Mode};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSequence};
use crate::tensor::{Adam, AdamConfig, Bound, Float, Graph, ParamStore, RngState, Tensor, Var};

/// RNG stream purposes.
pub(crate) const STREAM_DATA: u8 = 1;
pub(crate) const STREAM_NOISE: u8 = 2;
pub(crate) const STREAM_INIT: u8 = 3;

/// Aligned training crops: `mfcc[B, 39, L]`, `fbank[B, 45, L]`, and the
/// speaker-table row of each item.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub mfcc: Tensor<f32>,
    pub fbank: Tensor<f32>,
    pub speakers: Vec<usize>,
}

/// `recon` is the summed squared error, `aux` the bottleneck term, and `total`
/// the value actually minimized (see [`CodecConfig::loss_scale`]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub recon: f64,
    pub aux: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSequence {
    pub utterance_id: String,
    pub symbol_ids: Vec<usize>,
    pub frames_per_symbol: usize,
    pub frame_shift: f64,
    /// Input frames before padding.
    pub num_frames: usize,
}

impl SymbolSequence {
    pub fn duration(&self) -> f64 {
        self.num_frames as f64 * self.frame_shift
    }
}

/// Eval-mode encoding of one utterance; `h` and `z` are `[D, N]`.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub h: Tensor<f32>,
    pub z: Tensor<f32>,
    pub symbols: SymbolSequence,
}

/// Graph nodes of the training objective.
pub struct Objective {
    pub y_hat: Var,
    pub recon: Var,
    pub aux: Var,
    pub total: Var,
    pub symbol_ids: Vec<usize>,
}

/// Builds `scale * (sse / (2 sigma^2) + aux)` for one batch.
#[allow(clippy::too_many_arguments)]
pub fn objective<F: Float>(
    cfg: &CodecConfig,
    params: &ParamStore<F>,
    bound: &Bound,
    buffers: &mut Buffers<F>,
    g: &mut Graph<F>,
    mfcc: Tensor<F>,
    fbank: Tensor<F>,
    speakers: &[usize],
    mode: Mode,
    tau: f64,
    rng: &mut impl Rng,
) -> Result<Objective> {
    let mut net = Net {
        cfg,
        params,
        bound,
        buffers,
        train: mode == Mode::Train,
    };
    let x = g.constant(mfcc);
    let y = g.constant(fbank);
    let h = net.encode(g, x)?;
    let out = net.discretize(g, h, mode, tau, rng)?;
    let y_hat = net.decode(g, out.z, speakers)?;
    let diff = g.sub(y, y_hat)?;
    let recon = g.sum_squares(diff);
    let scale = cfg.loss_scale();
    let weighted_recon = g.scale(recon, F::from_f64c(scale / (2.0 * cfg.sigma * cfg.sigma)));
    let weighted_aux = g.scale(out.aux_loss, F::from_f64c(scale));
    let total = g.add(weighted_recon, weighted_aux)?;
    Ok(Objective {
        y_hat,
        recon,
        aux: out.aux_loss,
        total,
        symbol_ids: out.symbol_ids,
    })
}

/// Replicates the last frame of a channel-major `[C, T]` buffer up to `t_pad`.
fn pad_frames(x: &[f32], channels: usize, t: usize, t_pad: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(channels * t_pad);
    for c in 0..channels {
        let row = &x[c * t..(c + 1) * t];
        out.extend_from_slice(row);
        out.extend(std::iter::repeat_n(row[t - 1], t_pad - t));
    }
    out
}

#[derive(Clone, Debug)]
pub struct CodecModel {
    pub config: CodecConfig,
    pub params: ParamStore<f32>,
    pub buffers: Buffers,
    /// Row `i` of the speaker table belongs to `speakers[i]`.
    pub speakers: Vec<String>,
    pub norm: FeatureNorm,
    pub optimizer: Adam<f32>,
    pub rng: RngState,
    pub step: u64,
}

impl CodecModel {
    pub fn new(config: CodecConfig, speakers: Vec<String>, norm: FeatureNorm) -> Result<Self> {
        config.validate()?;
        if config.speaker_embed_dim > 0 && speakers.is_empty() {
            return Err(Error::invalid("speaker conditioning needs at least one speaker"));
        }
        if norm.mean.len() != MFCC_DIM || norm.std.len() != MFCC_DIM {
            return Err(Error::shape("normalization statistics must be 39-dim"));
        }
        let rng = RngState::new(config.training.seed);
        let (params, buffers) = init_params(&config, speakers.len(), &mut rng.stream(0, STREAM_INIT))?;
        let optimizer = Adam::new(Self::adam_config(&config), &params);
        Ok(Self {
            config,
            params,
            buffers,
            speakers,
            norm,
            optimizer,
            rng,
            step: 0,
        })
    }

    /// Adam with its epsilon multiplied by the loss scale, which makes the
    /// rescaled and literal objectives follow the same trajectory.
    pub fn adam_config(config: &CodecConfig) -> AdamConfig {
        let base = AdamConfig::default();
        AdamConfig {
            lr: config.training.lr,
            eps: base.eps * config.loss_scale(),
            ..base
        }
    }

    pub fn speaker_index(&self, speaker: &str) -> Result<usize> {
        self.speakers
            .iter()
            .position(|s| s == speaker)
            .ok_or_else(|| Error::UnknownSpeaker {
                speaker: speaker.to_string(),
                known: self.speakers.join(", "),
            })
    }

    pub fn tau(&self) -> f64 {
        self.config.anneal.tau(self.step)
    }

    fn check_batch(&self, batch: &Batch) -> Result<(usize, usize)> {
        let &[b, MFCC_DIM, l] = batch.mfcc.shape() else {
            return Err(Error::shape(format!(
                "mfcc batch must be [B, 39, L], got {:?}",
                batch.mfcc.shape()
            )));
        };
        if batch.fbank.shape() != [b, FBANK_DIM, l] {
            return Err(Error::shape(format!(
                "fbank batch {:?} is not aligned with mfcc batch {:?}",
                batch.fbank.shape(),
                batch.mfcc.shape()
            )));
        }
        if l == 0 || l % self.config.downsample_factor != 0 {
            return Err(Error::shape(format!(
                "crop length {l} is not a multiple of the downsampling factor {}",
                self.config.downsample_factor
            )));
        }
        if batch.speakers.len() != b {
            return Err(Error::shape(format!(
                "{} speakers for a batch of {b}",
                batch.speakers.len()
            )));
        }
        if let Some(&s) = batch.speakers.iter().find(|&&s| s >= self.speakers.len().max(1)) {
            return Err(Error::invalid(format!("speaker index {s} out of range")));
        }
        Ok((b, l))
    }

    /// Forward with the training-mode bottleneck, backward, one Adam step.
    /// Leaves the gradients in `params` for inspection.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossReport> {
        self.check_batch(batch)?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let mut rng = self.rng.stream(self.step, STREAM_NOISE);
        let tau = self.tau();
        let obj = objective(
            &self.config,
            &self.params,
            &bound,
            &mut self.buffers,
            &mut g,
            batch.mfcc.clone(),
            batch.fbank.clone(),
            &batch.speakers,
            Mode::Train,
            tau,
            &mut rng,
        )?;
        let report = LossReport {
            recon: g.value(obj.recon).item().to_f64c(),
            aux: g.value(obj.aux).item().to_f64c(),
            total: g.value(obj.total).item().to_f64c(),
        };
        if !report.total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at step {}: {report:?}",
                self.step
            )));
        }
        g.backward(obj.total)?;
        self.params.zero_grads();
        self.params.accumulate_grads(&g, &bound);
        if self
            .params
            .iter()
            .any(|p| p.grad.as_ref().is_some_and(|t| !t.all_finite()))
        {
            return Err(Error::Numeric(format!("non-finite gradient at step {}", self.step)));
        }
        self.optimizer.step(&mut self.params);
        self.step += 1;
        Ok(report)
    }

    /// Loss of the current parameters on `batch` without updating anything.
    pub fn evaluate(&self, batch: &Batch, mode: Mode) -> Result<LossReport> {
        self.check_batch(batch)?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let mut buffers = self.buffers.clone();
        let mut rng = self.rng.stream(self.step, STREAM_NOISE);
        let obj = objective(
            &self.config,
            &self.params,
            &bound,
            &mut buffers,
            &mut g,
            batch.mfcc.clone(),
            batch.fbank.clone(),
            &batch.speakers,
            mode,
            self.tau(),
            &mut rng,
        )?;
        Ok(LossReport {
            recon: g.value(obj.recon).item().to_f64c(),
            aux: g.value(obj.aux).item().to_f64c(),
            total: g.value(obj.total).item().to_f64c(),
        })
    }

    /// Normalized MFCCs as `[1, 39, T']`, edge-padded so `T'` is the next
    /// multiple of the downsampling factor.
    fn prepare_input(&self, mfcc: &FeatureSequence) -> Result<Tensor<f32>> {
        let f = self.config.downsample_factor;
        let t = mfcc.num_frames();
        if t < f {
            return Err(Error::invalid(format!(
                "{t} frames is shorter than the downsampling factor {f}"
            )));
        }
        let x = self.norm.apply_channel_major(mfcc)?;
        let t_pad = t.div_ceil(f) * f;
        Tensor::new(vec![1, MFCC_DIM, t_pad], pad_frames(&x, MFCC_DIM, t, t_pad))
    }

    /// Eval-mode encoding. Takes no speaker: the encoder and bottleneck have
    /// no speaker-dependent parameters.
    pub fn encode(&self, mfcc: &FeatureSequence) -> Result<Encoded> {
        let x = self.prepare_input(mfcc)?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let mut buffers = self.buffers.clone();
        let mut net = Net {
            cfg: &self.config,
            params: &self.params,
            bound: &bound,
            buffers: &mut buffers,
            train: false,
        };
        let x = g.constant(x);
        let h = net.encode(&mut g, x)?;
        let mut rng = self.rng.stream(0, STREAM_NOISE);
        let out = net.discretize(&mut g, h, Mode::Eval, self.config.anneal.tau_end, &mut rng)?;
        let squeeze = |t: &Tensor<f32>| {
            let s = t.shape().to_vec();
            t.clone().reshape(vec![s[1], s[2]])
        };
        Ok(Encoded {
            h: squeeze(g.value(h))?,
            z: squeeze(g.value(out.z))?,
            symbols: SymbolSequence {
                utterance_id: mfcc.utterance_id.clone(),
                symbol_ids: out.symbol_ids,
                frames_per_symbol: self.config.downsample_factor,
                frame_shift: mfcc.frame_shift,
                num_frames: mfcc.num_frames(),
            },
        })
    }

    /// The decoder input for a symbol sequence, `[D, N]`: codebook rows for
    /// VQ-VAE, one-hot columns for CatVAE, `±1` bit columns for STE.
    pub fn embed_symbols(&self, ids: &[usize]) -> Result<Tensor<f32>> {
        let k = self.config.alphabet_size();
        if let Some(&bad) = ids.iter().find(|&&i| i >= k) {
            return Err(Error::invalid(format!("symbol {bad} out of range 0..{k}")));
        }
        let n = ids.len();
        match self.config.bottleneck {
            BottleneckKind::Vqvae => {
                let cb = &self
                    .params
                    .get("bottleneck.codebook")
                    .expect("VQ model has a codebook")
                    .value;
                let d = cb.shape()[1];
                let rows = cb.data();
                Ok(Tensor::from_fn(vec![d, n], |i| rows[ids[i % n] * d + i / n]))
            }
            BottleneckKind::Catvae => one_hot(ids, k, 1)?.reshape(vec![k, n]),
            BottleneckKind::Ste => {
                let bits = self.config.num_symbols;
                Ok(Tensor::from_fn(vec![bits, n], |i| {
                    if ids[i % n] >> (i / n) & 1 == 1 {
                        1.0
                    } else {
                        -1.0
                    }
                }))
            }
        }
    }

    /// FBANK45 output for latents `z[D, N]`, `N * factor` frames. `speaker`
    /// selects the conditioning row and is required unless the model was
    /// trained without speaker conditioning, in which case it is ignored.
    pub fn decode(&self, z: &Tensor<f32>, speaker: Option<&str>) -> Result<FeatureSequence> {
        let (d, n) = match *z.shape() {
            [d, n] | [1, d, n] => (d, n),
            ref s => return Err(Error::shape(format!("decode expects [D, N] latents, got {s:?}"))),
        };
        if d != self.config.latent_dim() || n == 0 {
            return Err(Error::shape(format!(
                "decode expects {} latent channels, got {d}x{n}",
                self.config.latent_dim()
            )));
        }
        let spk = if self.config.speaker_embed_dim > 0 {
            let name = speaker.ok_or_else(|| Error::invalid("a target speaker is required for decoding"))?;
            vec![self.speaker_index(name)?]
        } else {
            vec![]
        };
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let mut buffers = self.buffers.clone();
        let mut net = Net {
            cfg: &self.config,
            params: &self.params,
            bound: &bound,
            buffers: &mut buffers,
            train: false,
        };
        let zv = g.constant(z.clone().reshape(vec![1, d, n])?);
        let y = net.decode(&mut g, zv, &spk)?;
        let y = g.value(y);
        let t = y.shape()[2];
        let yd = y.data();
        let frames = (0..t * FBANK_DIM)
            .map(|i| yd[(i % FBANK_DIM) * t + i / FBANK_DIM])
            .collect();
        FeatureSequence::new(FeatureKind::Fbank45, frames, t, self.frame_shift())
    }

    pub fn decode_symbols(&self, symbols: &SymbolSequence, speaker: Option<&str>) -> Result<FeatureSequence> {
        let z = self.embed_symbols(&symbols.symbol_ids)?;
        let out = self.decode(&z, speaker)?;
        Ok(out.with_ids(&symbols.utterance_id, speaker.unwrap_or("")))
    }

    fn frame_shift(&self) -> f64 {
        crate::features::FeatureConfig::default().frame_shift()
    }
}
