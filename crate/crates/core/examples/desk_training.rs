//! Trains one codec on the bundled synthetic corpus and prints the loss curve
//! and the ABX / bitrate report.
//!
//! ```text
//! cargo run --release --example desk_training -- vqvae 2000 [seed] [sigma]
//! ```

use std::time::Instant;

use zslab::bottleneck::BottleneckKind;
use zslab::evaluation::eval_report;
use zslab::features::FeatureConfig;
use zslab::model::{run_training, CodecConfig, CodecModel, FeatureNorm};
use zslab::synth::{SynthConfig, SynthCorpus};

fn main() -> zslab::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: BottleneckKind = args.next().as_deref().unwrap_or("vqvae").parse()?;
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let sigma: Option<f64> = args.next().and_then(|s| s.parse().ok());

    let synth = SynthCorpus::generate(&SynthConfig::default())?;
    let corpus = synth.features(&FeatureConfig::default())?;
    let task = synth.abx_task(2000, 0);
    println!(
        "corpus: {} utterances, {:.1} s, {} ABX triples",
        corpus.utterances.len(),
        synth.duration(),
        task.len()
    );

    let mut config = CodecConfig::desk(kind);
    config.training.total_steps = steps;
    config.training.seed = seed;
    if let Some(s) = sigma {
        config.sigma = s;
    }
    let norm = FeatureNorm::fit(corpus.utterances.iter().map(|u| &u.mfcc))?;
    let mut model = CodecModel::new(config, corpus.speakers(), norm)?;

    let start = Instant::now();
    let run = run_training(&mut model, &corpus, None, steps, |step, r| {
        if step % 250 == 0 {
            println!("step {step:5}  recon {:10.2}  aux {:10.4}", r.recon, r.aux);
        }
    })?;
    let last = run.losses.len().saturating_sub(100);
    let tail: f64 = run.losses[last..].iter().map(|r| r.recon).sum::<f64>() / (run.losses.len() - last) as f64;
    println!(
        "trained {steps} steps in {:.1} s; recon {:.2} -> {:.2} (mean of last 100)",
        start.elapsed().as_secs_f64(),
        run.losses[0].recon,
        tail
    );

    let report = eval_report(&model, None, &task, &corpus, None)?;
    print!("{}", report.to_tsv());
    Ok(())
}
