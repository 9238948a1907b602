//! Encodes utterances of one speaker and decodes the symbols with every
//! speaker embedding, printing how close the output lies to each speaker's
//! mean FBANK45 frame.
//!
//! ```text
//! cargo run --release --example voice_conversion -- [steps]
//! ```

use zslab::bottleneck::BottleneckKind;
use zslab::features::FeatureConfig;
use zslab::model::{run_training, CodecConfig, CodecModel, FeatureNorm};
use zslab::synth::{SynthConfig, SynthCorpus};

fn main() -> zslab::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let synth = SynthCorpus::generate(&SynthConfig::default())?;
    let corpus = synth.features(&FeatureConfig::default())?;
    let speakers = corpus.speakers();

    let mut config = CodecConfig::desk(BottleneckKind::Vqvae);
    config.training.total_steps = steps;
    let norm = FeatureNorm::fit(corpus.utterances.iter().map(|u| &u.mfcc))?;
    let mut model = CodecModel::new(config, speakers.clone(), norm)?;
    run_training(&mut model, &corpus, None, steps, |_, _| {})?;

    let mean_frame = |spk: &str| {
        let mut acc = vec![0f64; 45];
        let mut n = 0;
        for u in corpus.utterances.iter().filter(|u| u.speaker == spk) {
            for t in 0..u.fbank.num_frames() {
                acc.iter_mut()
                    .zip(u.fbank.frame(t))
                    .for_each(|(a, &x)| *a += f64::from(x));
                n += 1;
            }
        }
        acc.into_iter().map(|a| a / n as f64).collect::<Vec<_>>()
    };
    let means: Vec<Vec<f64>> = speakers.iter().map(|s| mean_frame(s)).collect();

    println!(
        "source -> target: distance of decoded mean frame to each speaker's mean ({})",
        speakers.join(", ")
    );
    let source = &speakers[0];
    for u in corpus.utterances.iter().filter(|u| &u.speaker == source).take(3) {
        let enc = model.encode(&u.mfcc)?;
        for target in &speakers {
            let y = model.decode(&enc.z, Some(target))?;
            let mut m = vec![0f64; 45];
            for t in 0..y.num_frames() {
                m.iter_mut()
                    .zip(y.frame(t))
                    .for_each(|(a, &x)| *a += f64::from(x) / y.num_frames() as f64);
            }
            let dists: Vec<String> = means
                .iter()
                .map(|c| {
                    format!(
                        "{:7.2}",
                        c.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                    )
                })
                .collect();
            println!("{} {source} -> {target}: {}", u.id, dists.join(" "));
        }
    }
    Ok(())
}
