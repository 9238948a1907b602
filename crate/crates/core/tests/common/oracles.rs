//! Independent reference implementations used as test oracles.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use zslab::evaluation::{AbxTask, AbxTriple, SegmentRef};
use zslab::features::{FeatureKind, FeatureSequence};

fn cosine(u: &[f32], v: &[f32]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
    let nu: f64 = u.iter().map(|&a| f64::from(a).powi(2)).sum();
    let nv: f64 = v.iter().map(|&a| f64::from(a).powi(2)).sum();
    if nu == 0.0 && nv == 0.0 {
        0.0
    } else if nu == 0.0 || nv == 0.0 {
        1.0
    } else {
        1.0 - (dot / (nu * nv).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Enumerates every monotone path from `(0, 0)` to the last cell with steps
/// `(1,0)`, `(0,1)`, `(1,1)`, keeps the one with the least summed cost (the
/// shorter one on equal sums) and returns its sum over its length.
pub fn brute_force_dtw(a: &[f32], b: &[f32], dim: usize) -> f64 {
    let (ta, tb) = (a.len() / dim, b.len() / dim);
    let cost = |i: usize, j: usize| cosine(&a[i * dim..][..dim], &b[j * dim..][..dim]);
    let mut best = (f64::INFINITY, usize::MAX);
    let mut stack = vec![(0usize, 0usize, cost(0, 0), 1usize)];
    while let Some((i, j, sum, len)) = stack.pop() {
        if i == ta - 1 && j == tb - 1 {
            if sum < best.0 || (sum == best.0 && len < best.1) {
                best = (sum, len);
            }
            continue;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < ta && nj < tb {
                stack.push((ni, nj, sum + cost(ni, nj), len + 1));
            }
        }
    }
    best.0 / best.1 as f64
}

/// `log2 M - (1/M) sum_c c log2 c` over the run lengths of the sorted stream.
pub fn entropy_oracle(symbols: &[usize]) -> f64 {
    let mut s = symbols.to_vec();
    s.sort_unstable();
    let m = s.len() as f64;
    let mut acc = 0.0;
    let mut i = 0;
    while i < s.len() {
        let j = s[i..].iter().position(|&v| v != s[i]).map_or(s.len(), |k| i + k);
        let c = (j - i) as f64;
        acc += c * c.log2();
        i = j;
    }
    m.log2() - acc / m
}

pub fn sequence(frames: Vec<f32>, dim: usize) -> FeatureSequence {
    let t = frames.len() / dim;
    FeatureSequence::new(FeatureKind::Custom(dim), frames, t, 0.01).unwrap()
}

/// How the synthetic ABX fixture draws a segment's frames.
#[derive(Clone, Copy, Debug)]
pub enum Frames {
    /// Class mean (scaled by `sep`) plus a speaker offset plus unit Gaussian noise.
    Clusters { sep: f64 },
    /// Unit Gaussian noise, independent of class and speaker.
    Noise,
    /// The same vector everywhere.
    Constant,
}

pub const LABELS: [&str; 2] = ["m-a-s", "m-i-s"];
pub const SPEAKERS: [&str; 2] = ["s1", "s2"];

/// `n` triples over two triphone classes and two speakers, every segment a
/// fresh utterance of 3 to 8 frames of dimension `dim`.
pub fn synthetic_abx(
    n: usize,
    dim: usize,
    frames: Frames,
    rng: &mut ChaCha8Rng,
) -> (AbxTask, BTreeMap<String, FeatureSequence>) {
    let gauss = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(rng)).collect() };
    let class_means = [gauss(rng, dim), gauss(rng, dim)];
    let speaker_offsets = [gauss(rng, dim), gauss(rng, dim)];
    let constant: Vec<f32> = gauss(rng, dim).into_iter().map(|v| v as f32).collect();

    let mut reps = BTreeMap::new();
    let mut triples = Vec::with_capacity(n);
    let mut segment = |rng: &mut ChaCha8Rng, label: usize, speaker: usize| -> SegmentRef {
        let t = rng.gen_range(3..=8);
        let mut data = Vec::with_capacity(t * dim);
        for _ in 0..t {
            for k in 0..dim {
                let v = match frames {
                    Frames::Clusters { sep } => {
                        sep * class_means[label][k] + 0.5 * speaker_offsets[speaker][k] + gauss(rng, 1)[0]
                    }
                    Frames::Noise => gauss(rng, 1)[0],
                    Frames::Constant => f64::from(constant[k]),
                };
                data.push(v as f32);
            }
        }
        let utt = format!("u{:06}", reps.len());
        reps.insert(utt.clone(), sequence(data, dim));
        SegmentRef {
            utt,
            start_frame: 0,
            end_frame: t,
            label: LABELS[label].to_string(),
            speaker: SPEAKERS[speaker].to_string(),
        }
    };
    for _ in 0..n {
        let (la, sa) = (rng.gen_range(0..2), rng.gen_range(0..2));
        let a = segment(rng, la, sa);
        let b = segment(rng, 1 - la, sa);
        let x = segment(rng, la, 1 - sa);
        triples.push(AbxTriple { a, b, x });
    }
    (AbxTask::new(triples).unwrap(), reps)
}
