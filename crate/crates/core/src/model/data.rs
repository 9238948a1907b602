use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codec::Batch;
use super::network::{FBANK_DIM, MFCC_DIM};
use crate::error::{Error, Result};
use crate::features::{fbank45, mfcc39, read_wav, FeatureConfig, FeatureSequence};
use crate::tensor::Tensor;

/// One line of a JSON Lines manifest. `wav` is resolved against the
/// manifest's directory when relative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub wav: PathBuf,
    pub speaker: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut e: ManifestEntry =
            serde_json::from_str(line).map_err(|err| Error::format(path, format!("line {}: {err}", i + 1)))?;
        if !ids.insert(e.id.clone()) {
            return Err(Error::format(path, format!("line {}: duplicate id {:?}", i + 1, e.id)));
        }
        if e.wav.is_relative() {
            e.wav = base.join(&e.wav);
        }
        out.push(e);
    }
    if out.is_empty() {
        return Err(Error::format(path, "manifest lists no utterances"));
    }
    Ok(out)
}

/// Per-dimension MFCC mean and standard deviation over the training frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FeatureNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(seqs: impl IntoIterator<Item = &'a FeatureSequence>) -> Result<Self> {
        let mut sum = vec![0f64; MFCC_DIM];
        let mut sq = vec![0f64; MFCC_DIM];
        let mut n = 0usize;
        for s in seqs {
            if s.dim() != MFCC_DIM {
                return Err(Error::shape(format!(
                    "normalization expects {MFCC_DIM}-dim MFCCs, got {}",
                    s.dim()
                )));
            }
            for t in 0..s.num_frames() {
                for (k, &v) in s.frame(t).iter().enumerate() {
                    sum[k] += f64::from(v);
                    sq[k] += f64::from(v) * f64::from(v);
                }
            }
            n += s.num_frames();
        }
        if n == 0 {
            return Err(Error::invalid("no frames to fit normalization statistics"));
        }
        let n = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| ((q / n - m * m).max(0.0).sqrt().max(1e-5)) as f32)
            .collect();
        Ok(Self {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        })
    }

    /// Normalized frames as a `[39, T]` channel-major buffer.
    pub fn apply_channel_major(&self, s: &FeatureSequence) -> Result<Vec<f32>> {
        if s.dim() != self.mean.len() {
            return Err(Error::shape(format!(
                "expected {}-dim features, got {}",
                self.mean.len(),
                s.dim()
            )));
        }
        let t = s.num_frames();
        let mut out = vec![0f32; s.dim() * t];
        for i in 0..t {
            for (k, &v) in s.frame(i).iter().enumerate() {
                out[k * t + i] = (v - self.mean[k]) / self.std[k];
            }
        }
        Ok(out)
    }
}

/// Time-aligned input and target features for one utterance.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub mfcc: FeatureSequence,
    pub fbank: FeatureSequence,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        speaker: impl Into<String>,
        mfcc: FeatureSequence,
        fbank: FeatureSequence,
    ) -> Result<Self> {
        let id = id.into();
        if mfcc.num_frames() != fbank.num_frames() || mfcc.dim() != MFCC_DIM || fbank.dim() != FBANK_DIM {
            return Err(Error::shape(format!(
                "{id}: MFCC {}x{} and FBANK {}x{} are not aligned 39/45-dim streams",
                mfcc.num_frames(),
                mfcc.dim(),
                fbank.num_frames(),
                fbank.dim()
            )));
        }
        Ok(Self {
            id,
            speaker: speaker.into(),
            mfcc,
            fbank,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::invalid("empty corpus"));
        }
        Ok(Self { utterances })
    }

    /// Reads every WAV in the manifest and computes MFCC39 and FBANK45.
    pub fn from_manifest(path: &Path, cfg: &FeatureConfig) -> Result<Self> {
        let entries = read_manifest(path)?;
        let utterances = entries
            .par_iter()
            .map(|e| {
                let wave = read_wav(&e.wav)?;
                let mfcc = mfcc39(&wave, cfg)?.with_ids(&e.id, &e.speaker);
                let fbank = fbank45(&wave, cfg)?.with_ids(&e.id, &e.speaker);
                Utterance::new(&e.id, &e.speaker, mfcc, fbank)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(utterances)
    }

    /// Sorted distinct speaker names.
    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.utterances.iter().map(|u| u.speaker.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.mfcc.num_frames()).sum()
    }

    /// `batch` aligned crops of `crop` frames from utterances drawn uniformly
    /// among those long enough, with uniformly drawn offsets. `speaker_index`
    /// maps a speaker name to its row in the model's speaker table.
    pub fn sample_batch(
        &self,
        norm: &FeatureNorm,
        crop: usize,
        batch: usize,
        speaker_index: impl Fn(&str) -> Result<usize>,
        rng: &mut impl Rng,
    ) -> Result<Batch> {
        let eligible: Vec<&Utterance> = self.utterances.iter().filter(|u| u.mfcc.num_frames() >= crop).collect();
        if eligible.is_empty() {
            return Err(Error::invalid(format!("no utterance has at least {crop} frames")));
        }
        let mut x = Vec::with_capacity(batch * MFCC_DIM * crop);
        let mut y = Vec::with_capacity(batch * FBANK_DIM * crop);
        let mut speakers = Vec::with_capacity(batch);
        for _ in 0..batch {
            let u = eligible[rng.gen_range(0..eligible.len())];
            let start = rng.gen_range(0..=u.mfcc.num_frames() - crop);
            for k in 0..MFCC_DIM {
                x.extend((start..start + crop).map(|t| (u.mfcc.frame(t)[k] - norm.mean[k]) / norm.std[k]));
            }
            for k in 0..FBANK_DIM {
                y.extend((start..start + crop).map(|t| u.fbank.frame(t)[k]));
            }
            speakers.push(speaker_index(&u.speaker)?);
        }
        Ok(Batch {
            mfcc: Tensor::new(vec![batch, MFCC_DIM, crop], x)?,
            fbank: Tensor::new(vec![batch, FBANK_DIM, crop], y)?,
            speakers,
        })
    }
}
