//! Audio ingestion and the model's feature interfaces: MFCC-39 input,
//! FBANK-45 target, and µ-law waveform codes.

mod featfile;
mod mfcc;
mod mulaw;
mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use featfile::{read_features, write_features, FEATURE_MAGIC};
pub use mfcc::{deltas, fbank45, mel_filterbank, mfcc39, FeatureConfig};
pub use mulaw::{decode_sample, encode_sample, mulaw_decode, mulaw_encode, CHANNELS as MULAW_CHANNELS};
pub use wav::{read_wav, write_wav, Waveform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc39,
    Fbank45,
    /// Any other representation, e.g. decoded latents.
    Custom(usize),
}

impl FeatureKind {
    pub fn dim(self) -> usize {
        match self {
            FeatureKind::Mfcc39 => 39,
            FeatureKind::Fbank45 => 45,
            FeatureKind::Custom(d) => d,
        }
    }

    pub fn from_dim(d: usize) -> Self {
        match d {
            39 => FeatureKind::Mfcc39,
            45 => FeatureKind::Fbank45,
            d => FeatureKind::Custom(d),
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mfcc39" => Ok(FeatureKind::Mfcc39),
            "fbank45" => Ok(FeatureKind::Fbank45),
            other => Err(Error::invalid(format!(
                "unknown feature kind {other:?} (mfcc39 | fbank45)"
            ))),
        }
    }
}

/// A `T x d` matrix of frames for one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    frames: Vec<f32>,
    num_frames: usize,
    pub kind: FeatureKind,
    pub frame_shift: f64,
    pub utterance_id: String,
    pub speaker_id: String,
}

impl FeatureSequence {
    pub fn new(kind: FeatureKind, frames: Vec<f32>, num_frames: usize, frame_shift: f64) -> Result<Self> {
        let d = kind.dim();
        if d == 0 || frames.len() != num_frames * d {
            return Err(Error::shape(format!(
                "{} values do not form {num_frames} frames of dimension {d}",
                frames.len()
            )));
        }
        Ok(Self {
            frames,
            num_frames,
            kind,
            frame_shift,
            utterance_id: String::new(),
            speaker_id: String::new(),
        })
    }

    pub fn with_ids(mut self, utterance: impl Into<String>, speaker: impl Into<String>) -> Self {
        self.utterance_id = utterance.into();
        self.speaker_id = speaker.into();
        self
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn frames(&self) -> &[f32] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [f32] {
        &mut self.frames
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let d = self.dim();
        &self.frames[t * d..][..d]
    }

    pub fn duration(&self) -> f64 {
        self.num_frames as f64 * self.frame_shift
    }
}
