use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::abx::{abx_error_rate, AbxTask};
use super::bitrate::{bitrate, codebook_utilization, SymbolStream};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSequence};
use crate::model::{CodecModel, Corpus, Encoded, Utterance};

/// One `[T, D]` frame per input frame: each symbol's decoder-input vector
/// repeated `frames_per_symbol` times, cut to the unpadded length.
pub fn latent_frames(model: &CodecModel, enc: &Encoded) -> Result<FeatureSequence> {
    let (d, n) = (enc.z.shape()[0], enc.z.shape()[1]);
    let f = enc.symbols.frames_per_symbol;
    let t = enc.symbols.num_frames;
    let z = model.embed_symbols(&enc.symbols.symbol_ids)?;
    let zd = z.data();
    let mut frames = Vec::with_capacity(t * d);
    for i in 0..t {
        let col = (i / f).min(n - 1);
        frames.extend((0..d).map(|k| zd[k * n + col]));
    }
    FeatureSequence::new(FeatureKind::from_dim(d), frames, t, enc.symbols.frame_shift)
}

fn truncate(seq: FeatureSequence, t: usize) -> Result<FeatureSequence> {
    let d = seq.dim();
    let mut frames = seq.frames().to_vec();
    frames.truncate(t * d);
    FeatureSequence::new(seq.kind, frames, t.min(seq.num_frames()), seq.frame_shift)
}

fn needed<'a>(corpus: &'a Corpus, task: &AbxTask) -> Result<Vec<&'a Utterance>> {
    let by_id: BTreeMap<&str, &Utterance> = corpus.utterances.iter().map(|u| (u.id.as_str(), u)).collect();
    task.utterances()
        .into_iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("ABX task references unknown utterance {id:?}")))
        })
        .collect()
}

/// Per-utterance representations used for ABX on one model.
pub struct ModelRepresentations {
    pub latent: BTreeMap<String, FeatureSequence>,
    pub output: BTreeMap<String, FeatureSequence>,
    pub stream: SymbolStream,
}

/// Encodes every corpus utterance, and decodes those in the task conditioned
/// on `target_speaker` (ignored for models without speaker conditioning).
pub fn model_representations(
    model: &CodecModel,
    corpus: &Corpus,
    task: &AbxTask,
    target_speaker: Option<&str>,
) -> Result<ModelRepresentations> {
    let in_task: std::collections::BTreeSet<&str> = task.utterances().into_iter().collect();
    needed(corpus, task)?;
    let encoded = corpus
        .utterances
        .par_iter()
        .map(|u| {
            let enc = model.encode(&u.mfcc)?;
            if !in_task.contains(u.id.as_str()) {
                return Ok((enc, None));
            }
            let latent = latent_frames(model, &enc)?;
            let out = truncate(model.decode(&enc.z, target_speaker)?, enc.symbols.num_frames)?;
            Ok((enc, Some((latent, out))))
        })
        .collect::<Result<Vec<_>>>()?;
    let stream = SymbolStream::from_sequences(encoded.iter().map(|(e, _)| &e.symbols))?;
    let mut latent = BTreeMap::new();
    let mut output = BTreeMap::new();
    for (u, (_, reps)) in corpus.utterances.iter().zip(encoded) {
        if let Some((l, o)) = reps {
            latent.insert(u.id.clone(), l);
            output.insert(u.id.clone(), o);
        }
    }
    Ok(ModelRepresentations { latent, output, stream })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub system: String,
    pub abx_latent: f64,
    pub abx_output_spkr_cond: f64,
    /// From the ablation checkpoint trained without speaker conditioning.
    pub abx_output_no_spkr_cond: Option<f64>,
    pub bitrate: f64,
    pub utilization: f64,
    pub abx_mfcc: f64,
    pub abx_fbank: f64,
    pub num_triples: usize,
}

impl EvalReport {
    /// Tab-separated table: one row for the model, reference rows for the
    /// input MFCCs and target filterbanks. ABX columns are percentages.
    pub fn to_tsv(&self) -> String {
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let mut s = String::from(
            "system\tabx_latent_pct\tabx_output_spkr_cond_pct\tabx_output_no_spkr_cond_pct\tbitrate_bps\tutilization\n",
        );
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.2}\t{:.4}",
            self.system,
            pct(self.abx_latent),
            pct(self.abx_output_spkr_cond),
            self.abx_output_no_spkr_cond.map_or("NA".to_string(), pct),
            self.bitrate,
            self.utilization
        );
        let _ = writeln!(s, "filterbanks\t{}\tNA\tNA\tNA\tNA", pct(self.abx_fbank));
        let _ = writeln!(s, "mfccs\t{}\tNA\tNA\tNA\tNA", pct(self.abx_mfcc));
        s
    }
}

/// ABX on the latent symbols, on decoder output conditioned on one target
/// speaker (the model's first speaker unless given), and on the output of an
/// optional model trained without speaker conditioning; bitrate and
/// utilization over the whole corpus.
pub fn eval_report(
    model: &CodecModel,
    ablation: Option<&CodecModel>,
    task: &AbxTask,
    corpus: &Corpus,
    target_speaker: Option<&str>,
) -> Result<EvalReport> {
    if task.is_empty() {
        return Err(Error::invalid("ABX task has no triples"));
    }
    let target = match target_speaker {
        Some(s) => Some(s.to_string()),
        None => model.speakers.first().cloned(),
    };
    let reps = model_representations(model, corpus, task, target.as_deref())?;
    let abx_latent = abx_error_rate(task, &reps.latent)?;
    let abx_output_spkr_cond = abx_error_rate(task, &reps.output)?;
    let abx_output_no_spkr_cond = match ablation {
        Some(m) => {
            let r = model_representations(m, corpus, task, None)?;
            Some(abx_error_rate(task, &r.output)?)
        }
        None => None,
    };
    let utts = needed(corpus, task)?;
    let mfcc: BTreeMap<String, FeatureSequence> = utts.iter().map(|u| (u.id.clone(), u.mfcc.clone())).collect();
    let fbank: BTreeMap<String, FeatureSequence> = utts.iter().map(|u| (u.id.clone(), u.fbank.clone())).collect();
    Ok(EvalReport {
        system: model.config.bottleneck.to_string(),
        abx_latent,
        abx_output_spkr_cond,
        abx_output_no_spkr_cond,
        bitrate: bitrate(&reps.stream),
        utilization: codebook_utilization(&reps.stream, model.config.alphabet_size()),
        abx_mfcc: abx_error_rate(task, &mfcc)?,
        abx_fbank: abx_error_rate(task, &fbank)?,
        num_triples: task.len(),
    })
}
