//! Convolutional encoder, discrete bottleneck and speaker-conditioned
//! decoder, with training, checkpoints and data plumbing.

mod checkpoint;
mod codec;
mod data;
mod network;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::bottleneck::{AnnealSchedule, BottleneckKind};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use codec::{objective, Batch, CodecModel, Encoded, LossReport, Objective, SymbolSequence};
pub use data::{read_manifest, Corpus, FeatureNorm, ManifestEntry, Utterance};
pub use network::{cast_buffers, init_params, Buffers, Net, FBANK_DIM, MFCC_DIM, RES_BLOCKS};
pub use trainer::{checkpoint_path, run_training, TrainingRun};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Frames per training crop; must be a multiple of the downsampling factor.
    pub crop_frames: usize,
    pub total_steps: u64,
    pub seed: u64,
    /// Save a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: 4e-4,
            batch_size: 32,
            crop_frames: 128,
            total_steps: 50_000,
            seed: 0,
            checkpoint_every: 5_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    pub bottleneck: BottleneckKind,
    /// Codebook size `K` for VQ-VAE and CatVAE; number of bits for STE.
    pub num_symbols: usize,
    /// Codebook vector size (VQ-VAE only).
    pub embed_dim: usize,
    pub downsample_factor: usize,
    pub channels: usize,
    /// 0 disables speaker conditioning.
    pub speaker_embed_dim: usize,
    pub sigma: f64,
    pub beta: f64,
    pub anneal: AnnealSchedule,
    /// Optimize `recon / (2 sigma^2) + aux` as written instead of the same
    /// objective multiplied by `2 sigma^2`.
    pub literal_objective: bool,
    pub training: TrainingConfig,
}

impl CodecConfig {
    /// Full-size settings: 768-channel trunk, 512 symbols, x4 downsampling.
    pub fn full(kind: BottleneckKind) -> Self {
        let (num_symbols, speaker_embed_dim) = match kind {
            BottleneckKind::Ste => (9, 250),
            _ => (512, 128),
        };
        Self {
            bottleneck: kind,
            num_symbols,
            embed_dim: 64,
            downsample_factor: 4,
            channels: 768,
            speaker_embed_dim,
            sigma: 1e-6,
            beta: 25.0,
            anneal: AnnealSchedule::default(),
            literal_objective: false,
            training: TrainingConfig::default(),
        }
    }

    /// Small settings that train in minutes on one CPU core.
    pub fn desk(kind: BottleneckKind) -> Self {
        let num_symbols = match kind {
            BottleneckKind::Ste => 5,
            _ => 32,
        };
        Self {
            bottleneck: kind,
            num_symbols,
            embed_dim: 16,
            downsample_factor: 4,
            channels: 32,
            speaker_embed_dim: 8,
            sigma: 1.0,
            beta: 25.0,
            anneal: AnnealSchedule {
                tau_start: 1.0,
                tau_end: 0.1,
                total_steps: 1_600,
            },
            literal_objective: false,
            training: TrainingConfig {
                lr: 4e-3,
                batch_size: 8,
                crop_frames: 32,
                total_steps: 2_000,
                seed: 0,
                checkpoint_every: 500,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.downsample_factor;
        if f == 0 || !f.is_power_of_two() {
            return Err(Error::invalid(format!(
                "downsample_factor must be a power of 2, got {f}"
            )));
        }
        match self.bottleneck {
            BottleneckKind::Ste if !(1..=30).contains(&self.num_symbols) => {
                return Err(Error::invalid(format!(
                    "STE needs 1..=30 bits, got {}",
                    self.num_symbols
                )));
            }
            BottleneckKind::Vqvae | BottleneckKind::Catvae if self.num_symbols < 2 => {
                return Err(Error::invalid(format!("need K >= 2 symbols, got {}", self.num_symbols)));
            }
            _ => {}
        }
        if self.bottleneck == BottleneckKind::Vqvae && self.embed_dim == 0 {
            return Err(Error::invalid("embed_dim must be positive"));
        }
        if self.channels == 0 {
            return Err(Error::invalid("channels must be positive"));
        }
        if !(self.sigma > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::invalid("sigma must be positive and beta non-negative"));
        }
        let a = &self.anneal;
        if !(a.tau_start > 0.0 && a.tau_end > 0.0 && a.tau_end <= a.tau_start) {
            return Err(Error::invalid("anneal needs 0 < tau_end <= tau_start"));
        }
        let t = &self.training;
        if !(t.lr > 0.0) || t.batch_size == 0 {
            return Err(Error::invalid("lr and batch_size must be positive"));
        }
        if t.crop_frames == 0 || !t.crop_frames.is_multiple_of(f) {
            return Err(Error::invalid(format!(
                "crop_frames {} must be a positive multiple of the downsampling factor {f}",
                t.crop_frames
            )));
        }
        Ok(())
    }

    pub fn downsample_layers(&self) -> usize {
        self.downsample_factor.trailing_zeros() as usize
    }

    /// Channels of the encoder output `h`.
    pub fn latent_dim(&self) -> usize {
        match self.bottleneck {
            BottleneckKind::Ste | BottleneckKind::Catvae => self.num_symbols,
            BottleneckKind::Vqvae => self.embed_dim,
        }
    }

    /// Size of the symbol alphabet.
    pub fn alphabet_size(&self) -> usize {
        match self.bottleneck {
            BottleneckKind::Ste => 1 << self.num_symbols,
            _ => self.num_symbols,
        }
    }

    /// Factor applied to the written objective before optimization.
    pub fn loss_scale(&self) -> f64 {
        if self.literal_objective {
            1.0
        } else {
            2.0 * self.sigma * self.sigma
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsampling_maps_to_layer_count() {
        let mut c = CodecConfig::desk(BottleneckKind::Vqvae);
        for (f, layers) in [(1, 0), (4, 2), (8, 3)] {
            c.downsample_factor = f;
            c.training.crop_frames = 32;
            c.validate().unwrap();
            assert_eq!(c.downsample_layers(), layers);
        }
        c.downsample_factor = 6;
        assert!(c.validate().is_err());
    }

    #[test]
    fn crop_must_divide() {
        let mut c = CodecConfig::desk(BottleneckKind::Ste);
        c.training.crop_frames = 30;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let c = CodecConfig::full(BottleneckKind::Catvae);
        let mut v = serde_json::to_value(&c).unwrap();
        assert_eq!(serde_json::from_value::<CodecConfig>(v.clone()).unwrap(), c);
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<CodecConfig>(v).is_err());
    }

    #[test]
    fn ste_alphabet_is_two_to_the_bits() {
        assert_eq!(CodecConfig::full(BottleneckKind::Ste).alphabet_size(), 512);
        assert_eq!(CodecConfig::full(BottleneckKind::Ste).speaker_embed_dim, 250);
        assert_eq!(CodecConfig::full(BottleneckKind::Vqvae).speaker_embed_dim, 128);
    }
}
