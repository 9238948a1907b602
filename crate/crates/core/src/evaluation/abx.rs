use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dtw::dtw_cosine;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;

/// Frames `[start_frame, end_frame)` of one utterance carrying a triphone label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRef {
    pub utt: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub label: String,
    pub speaker: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbxTriple {
    pub a: SegmentRef,
    pub b: SegmentRef,
    pub x: SegmentRef,
}

impl AbxTriple {
    /// A and X share a label, B differs; A and B share a speaker, X does not.
    pub fn validate(&self) -> Result<()> {
        for s in [&self.a, &self.b, &self.x] {
            if s.end_frame <= s.start_frame {
                return Err(Error::invalid(format!(
                    "empty segment {}[{}, {})",
                    s.utt, s.start_frame, s.end_frame
                )));
            }
        }
        if self.a.label != self.x.label || self.a.label == self.b.label {
            return Err(Error::invalid(format!(
                "labels must satisfy A == X != B, got {:?} {:?} {:?}",
                self.a.label, self.b.label, self.x.label
            )));
        }
        if self.a.speaker != self.b.speaker || self.a.speaker == self.x.speaker {
            return Err(Error::invalid(format!(
                "speakers must satisfy A == B != X, got {:?} {:?} {:?}",
                self.a.speaker, self.b.speaker, self.x.speaker
            )));
        }
        Ok(())
    }

    fn cell(&self) -> (&str, &str, &str, &str) {
        (&self.a.label, &self.b.label, &self.a.speaker, &self.x.speaker)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AbxTask {
    pub triples: Vec<AbxTriple>,
}

impl AbxTask {
    pub fn new(triples: Vec<AbxTriple>) -> Result<Self> {
        for t in &triples {
            t.validate()?;
        }
        Ok(Self { triples })
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Utterance ids referenced by the task, sorted.
    pub fn utterances(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .triples
            .iter()
            .flat_map(|t| [t.a.utt.as_str(), t.b.utt.as_str(), t.x.utt.as_str()])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// JSON Lines, one `{"a", "b", "x"}` object per line.
pub fn read_abx_task(path: &Path) -> Result<AbxTask> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut triples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: AbxTriple =
            serde_json::from_str(line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        t.validate()
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        triples.push(t);
    }
    Ok(AbxTask { triples })
}

pub fn write_abx_task(task: &AbxTask, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for t in &task.triples {
        serde_json::to_writer(&mut out, t)?;
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbxResult {
    pub error_rate: f64,
    pub num_cells: usize,
    pub num_triples: usize,
}

fn slice<'a>(reps: &'a BTreeMap<String, FeatureSequence>, s: &SegmentRef) -> Result<(&'a [f32], usize)> {
    let seq = reps
        .get(&s.utt)
        .ok_or_else(|| Error::invalid(format!("no representation for utterance {:?}", s.utt)))?;
    if s.end_frame > seq.num_frames() || s.end_frame <= s.start_frame {
        return Err(Error::invalid(format!(
            "segment {}[{}, {}) outside its {} frames",
            s.utt,
            s.start_frame,
            s.end_frame,
            seq.num_frames()
        )));
    }
    let d = seq.dim();
    Ok((&seq.frames()[s.start_frame * d..s.end_frame * d], d))
}

/// 1 when X is farther from A than from B, 0.5 on a tie, 0 otherwise.
pub fn score_triple(t: &AbxTriple, reps: &BTreeMap<String, FeatureSequence>) -> Result<f64> {
    let (a, da) = slice(reps, &t.a)?;
    let (b, db) = slice(reps, &t.b)?;
    let (x, dx) = slice(reps, &t.x)?;
    if da != db || da != dx {
        return Err(Error::shape(format!("representation dims differ: {da}, {db}, {dx}")));
    }
    let dax = dtw_cosine(a, x, da)?;
    let dbx = dtw_cosine(b, x, da)?;
    Ok(if dax > dbx {
        1.0
    } else if dax == dbx {
        0.5
    } else {
        0.0
    })
}

/// Scores averaged within each (label A, label B, speaker A/B, speaker X)
/// cell, then averaged over cells.
pub fn abx_evaluate(task: &AbxTask, reps: &BTreeMap<String, FeatureSequence>) -> Result<AbxResult> {
    if task.is_empty() {
        return Err(Error::invalid("ABX task has no triples"));
    }
    let scores = task
        .triples
        .par_iter()
        .map(|t| score_triple(t, reps))
        .collect::<Result<Vec<f64>>>()?;
    let mut cells: BTreeMap<(&str, &str, &str, &str), (f64, usize)> = BTreeMap::new();
    for (t, s) in task.triples.iter().zip(&scores) {
        let e = cells.entry(t.cell()).or_default();
        e.0 += s;
        e.1 += 1;
    }
    let error_rate = cells.values().map(|(s, n)| s / *n as f64).sum::<f64>() / cells.len() as f64;
    Ok(AbxResult {
        error_rate,
        num_cells: cells.len(),
        num_triples: task.len(),
    })
}

pub fn abx_error_rate(task: &AbxTask, reps: &BTreeMap<String, FeatureSequence>) -> Result<f64> {
    abx_evaluate(task, reps).map(|r| r.error_rate)
}
