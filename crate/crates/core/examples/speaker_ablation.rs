//! Trains VQ-VAE with and without speaker conditioning on several seeds and
//! compares ABX on the decoder output.
//!
//! ```text
//! cargo run --release --example speaker_ablation -- [steps] [seeds]
//! ```

use zslab::bottleneck::BottleneckKind;
use zslab::evaluation::eval_report;
use zslab::features::FeatureConfig;
use zslab::model::{run_training, CodecConfig, CodecModel, FeatureNorm};
use zslab::synth::{SynthConfig, SynthCorpus};

fn main() -> zslab::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);

    let synth = SynthCorpus::generate(&SynthConfig::default())?;
    let corpus = synth.features(&FeatureConfig::default())?;
    let task = synth.abx_task(2000, 0);
    let norm = FeatureNorm::fit(corpus.utterances.iter().map(|u| &u.mfcc))?;

    let train = |seed: u64, speaker_dim: usize| -> zslab::Result<CodecModel> {
        let mut config = CodecConfig::desk(BottleneckKind::Vqvae);
        config.training.seed = seed;
        config.training.total_steps = steps;
        config.speaker_embed_dim = speaker_dim;
        let mut model = CodecModel::new(config, corpus.speakers(), norm.clone())?;
        run_training(&mut model, &corpus, None, steps, |_, _| {})?;
        Ok(model)
    };

    println!("seed\tabx_output_spkr_cond_pct\tabx_output_no_spkr_cond_pct");
    for seed in 0..seeds {
        let cond = train(seed, CodecConfig::desk(BottleneckKind::Vqvae).speaker_embed_dim)?;
        let plain = train(seed, 0)?;
        let r = eval_report(&cond, Some(&plain), &task, &corpus, None)?;
        println!(
            "{seed}\t{:.2}\t{:.2}",
            100.0 * r.abx_output_spkr_cond,
            100.0 * r.abx_output_no_spkr_cond.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
