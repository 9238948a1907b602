//! Framing, log-Mel filterbanks, and MFCCs with delta and double-delta.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureSequence, Waveform};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    /// Window length in samples (25 ms at 16 kHz).
    pub window: usize,
    /// Hop length in samples (10 ms at 16 kHz).
    pub hop: usize,
    pub n_fft: usize,
    pub mfcc_mels: usize,
    pub fbank_mels: usize,
    pub n_ceps: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub delta_window: usize,
    /// Floor applied to energies before taking logs.
    pub energy_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window: 400,
            hop: 160,
            n_fft: 1024,
            mfcc_mels: 40,
            fbank_mels: 45,
            n_ceps: 13,
            fmin: 0.0,
            fmax: 8000.0,
            delta_window: 2,
            energy_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn frame_shift(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate)
    }

    /// `1 + floor((S - window) / hop)`, or `None` when `S < window`.
    pub fn num_frames(&self, num_samples: usize) -> Option<usize> {
        (num_samples >= self.window).then(|| 1 + (num_samples - self.window) / self.hop)
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular Mel filters over the `n_fft / 2 + 1` power-spectrum bins, as an
/// `n_mels x bins` row-major matrix.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Vec<f64> {
    let bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut w = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * f64::from(sample_rate) / n_fft as f64;
            let v = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            w[m * bins + k] = v;
        }
    }
    w
}

/// Regression deltas with `N`-frame context and edge replication:
/// `d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)`.
pub fn deltas(frames: &[f64], num_frames: usize, dim: usize, n: usize) -> Vec<f64> {
    let denom = 2.0 * (1..=n).map(|i| (i * i) as f64).sum::<f64>();
    let mut out = vec![0.0; frames.len()];
    if num_frames == 0 {
        return out;
    }
    for t in 0..num_frames {
        for k in 1..=n {
            let fwd = (t + k).min(num_frames - 1);
            let back = t.saturating_sub(k);
            for d in 0..dim {
                out[t * dim + d] += k as f64 * (frames[fwd * dim + d] - frames[back * dim + d]);
            }
        }
        for d in 0..dim {
            out[t * dim + d] /= denom;
        }
    }
    out
}

/// Power spectra of the Hamming-windowed frames, plus each frame's raw energy.
struct Spectra {
    power: Vec<f64>,
    energy: Vec<f64>,
    frames: usize,
    bins: usize,
}

struct Analyzer {
    cfg: FeatureConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl Analyzer {
    fn new(cfg: &FeatureConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        let n = cfg.window;
        let window = (0..n)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
            .collect();
        Self {
            cfg: cfg.clone(),
            fft,
            window,
        }
    }

    fn spectra(&self, wave: &Waveform) -> Result<Spectra> {
        let cfg = &self.cfg;
        if wave.sample_rate != cfg.sample_rate {
            return Err(Error::invalid(format!(
                "sample rate {} does not match feature config {}",
                wave.sample_rate, cfg.sample_rate
            )));
        }
        let frames = cfg.num_frames(wave.samples.len()).ok_or_else(|| {
            Error::invalid(format!(
                "utterance of {} samples is shorter than one {}-sample window",
                wave.samples.len(),
                cfg.window
            ))
        })?;
        let bins = cfg.n_fft / 2 + 1;
        let mut power = vec![0.0; frames * bins];
        let mut energy = vec![0.0; frames];
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        for t in 0..frames {
            let seg = &wave.samples[t * cfg.hop..][..cfg.window];
            energy[t] = seg.iter().map(|&s| f64::from(s).powi(2)).sum();
            for (i, c) in buf.iter_mut().enumerate() {
                *c = if i < cfg.window {
                    Complex::new(f64::from(seg[i]) * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (k, p) in power[t * bins..][..bins].iter_mut().enumerate() {
                *p = buf[k].norm_sqr();
            }
        }
        Ok(Spectra {
            power,
            energy,
            frames,
            bins,
        })
    }
}

fn log_mel(spec: &Spectra, filters: &[f64], n_mels: usize, floor: f64) -> Vec<f64> {
    let mut out = vec![0.0; spec.frames * n_mels];
    for t in 0..spec.frames {
        let p = &spec.power[t * spec.bins..][..spec.bins];
        for m in 0..n_mels {
            let e: f64 = filters[m * spec.bins..][..spec.bins]
                .iter()
                .zip(p)
                .map(|(w, v)| w * v)
                .sum();
            out[t * n_mels + m] = e.max(floor).ln();
        }
    }
    out
}

/// 45 log-Mel filterbank energies per frame.
pub fn fbank45(wave: &Waveform, cfg: &FeatureConfig) -> Result<FeatureSequence> {
    let spec = Analyzer::new(cfg).spectra(wave)?;
    let filters = mel_filterbank(cfg.fbank_mels, cfg.n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax);
    let frames = log_mel(&spec, &filters, cfg.fbank_mels, cfg.energy_floor);
    FeatureSequence::new(
        FeatureKind::Fbank45,
        frames.into_iter().map(|v| v as f32).collect(),
        spec.frames,
        cfg.frame_shift(),
    )
}

/// 13 cepstra (C0 replaced by log frame energy) with deltas and double deltas.
pub fn mfcc39(wave: &Waveform, cfg: &FeatureConfig) -> Result<FeatureSequence> {
    let spec = Analyzer::new(cfg).spectra(wave)?;
    let n_mels = cfg.mfcc_mels;
    let filters = mel_filterbank(n_mels, cfg.n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax);
    let logmel = log_mel(&spec, &filters, n_mels, cfg.energy_floor);
    let nc = cfg.n_ceps;
    let mut ceps = vec![0.0; spec.frames * nc];
    for t in 0..spec.frames {
        let x = &logmel[t * n_mels..][..n_mels];
        for i in 1..nc {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(m, &v)| v * (PI * i as f64 * (m as f64 + 0.5) / n_mels as f64).cos())
                .sum();
            ceps[t * nc + i] = s * (2.0 / n_mels as f64).sqrt();
        }
        ceps[t * nc] = spec.energy[t].max(cfg.energy_floor).ln();
    }
    let d1 = deltas(&ceps, spec.frames, nc, cfg.delta_window);
    let d2 = deltas(&d1, spec.frames, nc, cfg.delta_window);
    let mut frames = Vec::with_capacity(spec.frames * 3 * nc);
    for t in 0..spec.frames {
        for src in [&ceps, &d1, &d2] {
            frames.extend(src[t * nc..][..nc].iter().map(|&v| v as f32));
        }
    }
    FeatureSequence::new(FeatureKind::Mfcc39, frames, spec.frames, cfg.frame_shift())
}
