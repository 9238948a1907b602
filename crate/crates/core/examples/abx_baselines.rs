//! ABX error of raw MFCC39 and FBANK45 frames on the synthetic across-speaker
//! triphone task.
//!
//! ```text
//! cargo run --release --example abx_baselines [max_triples]
//! ```

use std::collections::BTreeMap;

use zslab::evaluation::abx_evaluate;
use zslab::features::FeatureConfig;
use zslab::synth::{SynthConfig, SynthCorpus};

fn main() -> zslab::Result<()> {
    let max_triples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let synth = SynthCorpus::generate(&SynthConfig::default())?;
    let corpus = synth.features(&FeatureConfig::default())?;
    let task = synth.abx_task(max_triples, 0);
    println!("{} triples over {} utterances", task.len(), task.utterances().len());

    let mfcc: BTreeMap<_, _> = corpus
        .utterances
        .iter()
        .map(|u| (u.id.clone(), u.mfcc.clone()))
        .collect();
    let fbank: BTreeMap<_, _> = corpus
        .utterances
        .iter()
        .map(|u| (u.id.clone(), u.fbank.clone()))
        .collect();
    for (name, reps) in [("mfccs", &mfcc), ("filterbanks", &fbank)] {
        let r = abx_evaluate(&task, reps)?;
        println!("{name:<12} {:6.2}%  ({} cells)", 100.0 * r.error_rate, r.num_cells);
    }
    Ok(())
}
