//! Trains a CatVAE codec in two halves with a checkpoint in between and
//! compares it with an uninterrupted run.
//!
//! ```text
//! cargo run --release --example checkpoint_resume -- [steps]
//! ```

use zslab::bottleneck::BottleneckKind;
use zslab::features::FeatureConfig;
use zslab::model::{load_checkpoint, run_training, save_checkpoint, CodecConfig, CodecModel, FeatureNorm};
use zslab::synth::{SynthConfig, SynthCorpus};

fn main() -> zslab::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let synth = SynthCorpus::generate(&SynthConfig::default())?;
    let corpus = synth.features(&FeatureConfig::default())?;
    let norm = FeatureNorm::fit(corpus.utterances.iter().map(|u| &u.mfcc))?;
    let config = CodecConfig::desk(BottleneckKind::Catvae);

    let mut full = CodecModel::new(config.clone(), corpus.speakers(), norm.clone())?;
    let whole = run_training(&mut full, &corpus, None, steps, |_, _| {})?.losses;

    let mut half = CodecModel::new(config, corpus.speakers(), norm)?;
    let mut losses = run_training(&mut half, &corpus, None, steps / 2, |_, _| {})?.losses;
    let path = std::env::temp_dir().join("zslab_resume_example.zsckpt");
    save_checkpoint(&half, &path)?;
    let mut resumed = load_checkpoint(&path)?;
    println!("saved and reloaded {} at step {}", path.display(), resumed.step);
    losses.extend(run_training(&mut resumed, &corpus, None, steps, |_, _| {})?.losses);

    let same_losses = whole
        .iter()
        .zip(&losses)
        .all(|(a, b)| a.total.to_bits() == b.total.to_bits());
    let same_params = full
        .params
        .iter()
        .zip(resumed.params.iter())
        .all(|(a, b)| a.value.data() == b.value.data());
    println!(
        "final loss {:.4} vs {:.4}",
        whole.last().unwrap().total,
        losses.last().unwrap().total
    );
    println!("losses bit-identical: {same_losses}, parameters identical: {same_params}");
    std::fs::remove_file(&path).ok();
    Ok(())
}
