//! A small synthetic speech corpus for end-to-end runs without external data.
//!
//! Two speakers differ in pitch, vocal-tract scaling and spectral tilt. Each
//! utterance is a string of three-phone words (consonant, vowel, consonant)
//! separated by silence; vowels and the nasal are harmonic sources shaped by
//! formant resonances, fricatives are band-passed noise. Every word occurs
//! for every speaker, so minimal-pair ABX triples are available across
//! speakers.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{write_abx_task, AbxTask, AbxTriple, SegmentRef};
use crate::features::{fbank45, mfcc39, write_wav, FeatureConfig, Waveform};
use crate::model::{Corpus, ManifestEntry, Utterance};

const SAMPLE_RATE: u32 = 16_000;
const HOP: usize = 160;
const WINDOW: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Voice {
    pub name: String,
    pub f0: f64,
    /// Multiplies every formant frequency and bandwidth.
    pub formant_scale: f64,
    pub tilt_db_per_octave: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub voices: Vec<Voice>,
    /// How often each speaker says each word.
    pub repeats: usize,
    pub words_per_utterance: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2019,
            voices: vec![
                Voice {
                    name: "spk_a".into(),
                    f0: 110.0,
                    formant_scale: 1.0,
                    tilt_db_per_octave: -6.0,
                },
                Voice {
                    name: "spk_b".into(),
                    f0: 205.0,
                    formant_scale: 1.18,
                    tilt_db_per_octave: -2.0,
                },
            ],
            repeats: 2,
            words_per_utterance: (4, 6),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Source {
    Voiced { formants: [f64; 3], gain: f64 },
    Noise { centre: f64, q: f64, gain: f64 },
    Silence,
}

fn phone(name: &str) -> Source {
    let v = |f1, f2, f3| Source::Voiced {
        formants: [f1, f2, f3],
        gain: 1.0,
    };
    match name {
        "a" => v(730.0, 1090.0, 2440.0),
        "i" => v(270.0, 2290.0, 3010.0),
        "u" => v(300.0, 870.0, 2240.0),
        "e" => v(530.0, 1840.0, 2480.0),
        "o" => v(570.0, 840.0, 2410.0),
        "m" => Source::Voiced {
            formants: [250.0, 1100.0, 2300.0],
            gain: 0.25,
        },
        "s" => Source::Noise {
            centre: 5500.0,
            q: 3.0,
            gain: 0.5,
        },
        "f" => Source::Noise {
            centre: 3200.0,
            q: 0.8,
            gain: 0.25,
        },
        _ => Source::Silence,
    }
}

pub const VOWELS: [&str; 5] = ["a", "i", "u", "e", "o"];
pub const CONTEXTS: [(&str, &str); 6] = [("m", "s"), ("s", "m"), ("f", "m"), ("m", "f"), ("s", "f"), ("f", "s")];

/// A labelled span of feature frames `[start_frame, end_frame)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub label: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Clone, Debug)]
pub struct SynthUtterance {
    pub id: String,
    pub speaker: String,
    pub wave: Waveform,
    pub phones: Vec<Span>,
    /// Triphone words, labelled `left-middle-right`.
    pub words: Vec<Span>,
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub utterances: Vec<SynthUtterance>,
}

/// Paths written by [`SynthCorpus::write`].
#[derive(Clone, Debug)]
pub struct SynthPaths {
    pub manifest: PathBuf,
    pub alignments: PathBuf,
    pub abx_task: PathBuf,
}

fn envelope(f: f64, formants: &[f64; 3], voice: &Voice) -> f64 {
    const GAINS: [f64; 3] = [1.0, 0.5, 0.25];
    const WIDTHS: [f64; 3] = [90.0, 110.0, 170.0];
    let mut e = 0.0;
    for i in 0..3 {
        let centre = formants[i] * voice.formant_scale;
        let width = WIDTHS[i] * voice.formant_scale;
        e += GAINS[i] / (1.0 + ((f - centre) / width).powi(2));
    }
    let octaves = (f.max(100.0) / 100.0).log2();
    e * 10f64.powf(voice.tilt_db_per_octave * octaves / 20.0)
}

/// Band-pass biquad (constant peak gain), direct form I.
#[derive(Default)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn set(&mut self, centre: f64, q: f64) {
        let w = 2.0 * PI * centre.min(7600.0) / f64::from(SAMPLE_RATE);
        let alpha = w.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        self.b = [alpha / a0, 0.0, -alpha / a0];
        self.a = [-2.0 * w.cos() / a0, (1.0 - alpha) / a0];
    }

    fn run(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

fn to_frames(sample: usize, num_frames: usize) -> usize {
    // First frame whose window centre lies at or after `sample`.
    let centre = WINDOW / 2;
    (sample.saturating_sub(centre)).div_ceil(HOP).min(num_frames)
}

fn synthesize(voice: &Voice, phones: &[(&str, usize)], rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<(usize, usize)>) {
    let total: usize = phones.iter().map(|p| p.1).sum();
    let mut bounds = Vec::with_capacity(phones.len());
    let mut at = 0;
    for &(_, len) in phones {
        bounds.push((at, at + len));
        at += len;
    }
    // Source parameters per hop-sized knot, smoothed to mimic coarticulation.
    let knots = total.div_ceil(HOP) + 1;
    let mut voicing = vec![0f64; knots];
    let mut formants = vec![[500.0, 1500.0, 2500.0]; knots];
    let mut noise_gain = vec![0f64; knots];
    let mut noise_centre = vec![4000f64; knots];
    let mut noise_q = vec![1f64; knots];
    let mut p = 0;
    for k in 0..knots {
        let s = (k * HOP).min(total - 1);
        while bounds[p].1 <= s {
            p += 1;
        }
        match phone(phones[p].0) {
            Source::Voiced { formants: f, gain } => {
                voicing[k] = gain;
                formants[k] = f;
            }
            Source::Noise { centre, q, gain } => {
                noise_gain[k] = gain;
                noise_centre[k] = centre * voice.formant_scale;
                noise_q[k] = q;
                if k > 0 {
                    formants[k] = formants[k - 1];
                }
            }
            Source::Silence => {
                if k > 0 {
                    formants[k] = formants[k - 1];
                }
            }
        }
    }
    for k in 1..knots {
        voicing[k] = 0.5 * voicing[k] + 0.5 * voicing[k - 1];
        noise_gain[k] = 0.5 * noise_gain[k] + 0.5 * noise_gain[k - 1];
        for i in 0..3 {
            formants[k][i] = 0.6 * formants[k][i] + 0.4 * formants[k - 1][i];
        }
    }

    let f0_base = voice.f0 * rng.gen_range(0.95..1.05);
    let harmonics = (7800.0 / (f0_base * 1.05)) as usize;
    let mut phase = vec![0f64; harmonics];
    let mut amps_prev: Vec<f64> = Vec::new();
    let mut amps_next: Vec<f64> = Vec::new();
    let mut filter = Biquad::default();
    let mut out = vec![0f64; total];
    for k in 0..knots - 1 {
        let f0 = f0_base * (1.0 - 0.08 * (k * HOP) as f64 / total as f64);
        let amps = |kk: usize| -> Vec<f64> {
            (1..=harmonics)
                .map(|h| voicing[kk] * envelope(h as f64 * f0, &formants[kk], voice))
                .collect()
        };
        if k == 0 {
            amps_prev = amps(0);
        } else {
            std::mem::swap(&mut amps_prev, &mut amps_next);
        }
        amps_next = amps(k + 1);
        filter.set(noise_centre[k], noise_q[k]);
        for n in k * HOP..((k + 1) * HOP).min(total) {
            let frac = (n - k * HOP) as f64 / HOP as f64;
            let mut v = 0.0;
            for h in 0..harmonics {
                let a = amps_prev[h] + (amps_next[h] - amps_prev[h]) * frac;
                if a > 1e-6 {
                    v += a * phase[h].sin();
                }
                phase[h] = (phase[h] + 2.0 * PI * (h + 1) as f64 * f0 / f64::from(SAMPLE_RATE)) % (2.0 * PI);
            }
            let g = noise_gain[k] + (noise_gain[k + 1] - noise_gain[k]) * frac;
            let w: f64 = rng.sample(StandardNormal);
            let noise = filter.run(w) * g * 4.0;
            let floor: f64 = rng.sample::<f64, _>(StandardNormal) * 2e-3;
            out[n] = 0.2 * v + noise + floor;
        }
    }
    let peak = out.iter().fold(0f64, |m, v| m.max(v.abs())).max(1e-9);
    let samples = out.iter().map(|v| (0.5 * v / peak) as f32).collect();
    (samples, bounds)
}

fn tokens<'a>(
    by_word: &'a BTreeMap<(&'a str, &'a str), Vec<SegmentRef>>,
    label: &'a str,
    speaker: &'a str,
) -> &'a [SegmentRef] {
    by_word.get(&(label, speaker)).map_or(&[], Vec::as_slice)
}

impl SynthCorpus {
    /// About 60 seconds of audio with the default configuration.
    pub fn generate(cfg: &SynthConfig) -> Result<Self> {
        if cfg.voices.len() < 2 {
            return Err(Error::invalid("need at least two voices for cross-speaker ABX"));
        }
        let (lo, hi) = cfg.words_per_utterance;
        if lo == 0 || hi < lo || cfg.repeats == 0 {
            return Err(Error::invalid(
                "need repeats >= 1 and 1 <= min <= max words per utterance",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let words: Vec<[&str; 3]> = CONTEXTS
            .iter()
            .flat_map(|&(l, r)| VOWELS.iter().map(move |&v| [l, v, r]))
            .collect();
        let frames = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| rng.gen_range(lo..=hi) * HOP;
        let mut utterances = Vec::new();
        for voice in &cfg.voices {
            let mut todo: Vec<[&str; 3]> = (0..cfg.repeats).flat_map(|_| words.iter().copied()).collect();
            todo.shuffle(&mut rng);
            let mut index = 0;
            while !todo.is_empty() {
                let n = rng.gen_range(lo..=hi).min(todo.len());
                let chunk: Vec<[&str; 3]> = todo.drain(..n).collect();
                let mut plan: Vec<(&str, usize)> = vec![("sil", frames(&mut rng, 15, 25))];
                let mut word_at = Vec::new();
                for w in &chunk {
                    word_at.push(plan.len());
                    plan.push((w[0], frames(&mut rng, 6, 9)));
                    plan.push((w[1], frames(&mut rng, 9, 14)));
                    plan.push((w[2], frames(&mut rng, 6, 9)));
                    plan.push(("sil", frames(&mut rng, 8, 15)));
                }
                plan.push(("sil", frames(&mut rng, 10, 15)));
                let (samples, bounds) = synthesize(voice, &plan, &mut rng);
                let num_frames = 1 + (samples.len() - WINDOW) / HOP;
                let span = |label: String, s0: usize, s1: usize| Span {
                    label,
                    start_frame: to_frames(s0, num_frames),
                    end_frame: to_frames(s1, num_frames),
                };
                let phones = plan
                    .iter()
                    .zip(&bounds)
                    .map(|(&(p, _), &(s0, s1))| span(p.to_string(), s0, s1))
                    .collect();
                let word_spans = chunk
                    .iter()
                    .zip(&word_at)
                    .map(|(w, &i)| span(w.join("-"), bounds[i].0, bounds[i + 2].1))
                    .collect();
                utterances.push(SynthUtterance {
                    id: format!("{}_{index:03}", voice.name),
                    speaker: voice.name.clone(),
                    wave: Waveform::new(samples, SAMPLE_RATE)?,
                    phones,
                    words: word_spans,
                });
                index += 1;
            }
        }
        Ok(Self { utterances })
    }

    pub fn duration(&self) -> f64 {
        self.utterances.iter().map(|u| u.wave.duration()).sum()
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.utterances.iter().map(|u| u.speaker.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// MFCC39 inputs and FBANK45 targets for every utterance.
    pub fn features(&self, cfg: &FeatureConfig) -> Result<Corpus> {
        use rayon::prelude::*;
        let utts = self
            .utterances
            .par_iter()
            .map(|u| {
                let m = mfcc39(&u.wave, cfg)?.with_ids(&u.id, &u.speaker);
                let f = fbank45(&u.wave, cfg)?.with_ids(&u.id, &u.speaker);
                Utterance::new(&u.id, &u.speaker, m, f)
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(utts)
    }

    /// Minimal-pair triples: A and X say the same word, B the word with the
    /// other vowel in the same consonant context; A and B share a speaker,
    /// X is another speaker. All combinations, then a seeded subsample of at
    /// most `max_triples`.
    pub fn abx_task(&self, max_triples: usize, seed: u64) -> AbxTask {
        let mut by_word: BTreeMap<(&str, &str), Vec<SegmentRef>> = BTreeMap::new();
        for u in &self.utterances {
            for w in &u.words {
                by_word
                    .entry((w.label.as_str(), u.speaker.as_str()))
                    .or_default()
                    .push(SegmentRef {
                        utt: u.id.clone(),
                        start_frame: w.start_frame,
                        end_frame: w.end_frame,
                        label: w.label.clone(),
                        speaker: u.speaker.clone(),
                    });
            }
        }
        let speakers = self.speakers();
        let mut triples = Vec::new();
        for &(l, r) in &CONTEXTS {
            for v1 in VOWELS {
                for v2 in VOWELS.iter().filter(|&&v| v != v1) {
                    let la = format!("{l}-{v1}-{r}");
                    let lb = format!("{l}-{v2}-{r}");
                    for sab in &speakers {
                        for sx in speakers.iter().filter(|&s| s != sab) {
                            for a in tokens(&by_word, &la, sab) {
                                for b in tokens(&by_word, &lb, sab) {
                                    for x in tokens(&by_word, &la, sx) {
                                        triples.push(AbxTriple {
                                            a: a.clone(),
                                            b: b.clone(),
                                            x: x.clone(),
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if triples.len() > max_triples {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            triples.shuffle(&mut rng);
            triples.truncate(max_triples);
        }
        AbxTask { triples }
    }

    /// Writes `wav/<id>.wav`, `manifest.jsonl`, `alignments.jsonl` and
    /// `abx_task.jsonl` under `dir`.
    pub fn write(&self, dir: &Path, max_triples: usize) -> Result<SynthPaths> {
        let wav_dir = dir.join("wav");
        fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
        let mut manifest = Vec::new();
        let mut align = Vec::new();
        for u in &self.utterances {
            let rel = PathBuf::from("wav").join(format!("{}.wav", u.id));
            write_wav(dir.join(&rel), &u.wave)?;
            serde_json::to_writer(
                &mut manifest,
                &ManifestEntry {
                    id: u.id.clone(),
                    wav: rel,
                    speaker: u.speaker.clone(),
                },
            )?;
            manifest.push(b'\n');
            serde_json::to_writer(
                &mut align,
                &serde_json::json!({"utt": u.id, "speaker": u.speaker, "phones": u.phones, "words": u.words}),
            )?;
            align.push(b'\n');
        }
        let paths = SynthPaths {
            manifest: dir.join("manifest.jsonl"),
            alignments: dir.join("alignments.jsonl"),
            abx_task: dir.join("abx_task.jsonl"),
        };
        for (p, bytes) in [(&paths.manifest, &manifest), (&paths.alignments, &align)] {
            fs::File::create(p)
                .and_then(|mut f| f.write_all(bytes))
                .map_err(|e| Error::io(p, e))?;
        }
        write_abx_task(&self.abx_task(max_triples, 0), &paths.abx_task)?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corpus_is_about_a_minute_with_both_speakers() {
        let c = SynthCorpus::generate(&SynthConfig::default()).unwrap();
        let d = c.duration();
        assert!((45.0..=80.0).contains(&d), "{d}");
        assert_eq!(c.speakers(), vec!["spk_a", "spk_b"]);
        for u in &c.utterances {
            assert!(u.wave.samples.iter().all(|s| s.abs() <= 0.5 + 1e-6));
            for w in &u.words {
                assert!(w.end_frame > w.start_frame);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            repeats: 1,
            ..SynthConfig::default()
        };
        let a = SynthCorpus::generate(&cfg).unwrap();
        let b = SynthCorpus::generate(&cfg).unwrap();
        assert_eq!(a.utterances[3].wave, b.utterances[3].wave);
    }

    #[test]
    fn abx_triples_are_minimal_pairs_across_speakers() {
        let cfg = SynthConfig {
            repeats: 1,
            ..SynthConfig::default()
        };
        let task = SynthCorpus::generate(&cfg).unwrap().abx_task(500, 1);
        // One token per word and speaker: 6 contexts x 20 ordered vowel pairs x 2 speaker orders.
        assert_eq!(task.len(), 240);
        for t in &task.triples {
            t.validate().unwrap();
            let (a, b): (Vec<&str>, Vec<&str>) = (t.a.label.split('-').collect(), t.b.label.split('-').collect());
            assert_eq!((a[0], a[2]), (b[0], b[2]));
        }
    }
}
