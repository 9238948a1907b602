//! Trains the same VQ-VAE at several downsampling factors and prints the
//! bitrate of the resulting symbol streams.
//!
//! ```text
//! cargo run --release --example downsampling_bitrate -- [steps] [factors...]
//! ```

use zslab::bottleneck::BottleneckKind;
use zslab::evaluation::{bitrate, codebook_utilization, entropy_bits, SymbolStream};
use zslab::features::FeatureConfig;
use zslab::model::{run_training, CodecConfig, CodecModel, FeatureNorm};
use zslab::synth::{SynthConfig, SynthCorpus};

fn main() -> zslab::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let mut factors: Vec<usize> = args.filter_map(|s| s.parse().ok()).collect();
    if factors.is_empty() {
        factors = vec![2, 4, 8];
    }

    let synth = SynthCorpus::generate(&SynthConfig::default())?;
    let corpus = synth.features(&FeatureConfig::default())?;
    let norm = FeatureNorm::fit(corpus.utterances.iter().map(|u| &u.mfcc))?;

    println!("factor\tsymbols\tdistinct\tentropy_bits\tbitrate_bps\tutilization");
    for f in factors {
        let mut config = CodecConfig::desk(BottleneckKind::Vqvae);
        config.downsample_factor = f;
        config.training.total_steps = steps;
        let mut model = CodecModel::new(config, corpus.speakers(), norm.clone())?;
        run_training(&mut model, &corpus, None, steps, |_, _| {})?;

        let seqs = corpus
            .utterances
            .iter()
            .map(|u| model.encode(&u.mfcc).map(|e| e.symbols))
            .collect::<zslab::Result<Vec<_>>>()?;
        let stream = SymbolStream::from_sequences(&seqs)?;
        println!(
            "{f}\t{}\t{}\t{:.3}\t{:.2}\t{:.3}",
            stream.symbols.len(),
            stream.distinct(),
            entropy_bits(&stream.symbols),
            bitrate(&stream),
            codebook_utilization(&stream, model.config.alphabet_size())
        );
    }
    Ok(())
}
