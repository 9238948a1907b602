//! MFCC39 and FBANK45 features for the synthetic corpus, written to and read
//! back from the binary feature format.
//!
//! ```text
//! cargo run --release --example feature_extraction [out_dir]
//! ```

use zslab::features::{fbank45, mfcc39, read_features, write_features, FeatureConfig};
use zslab::synth::{SynthConfig, SynthCorpus};

fn main() -> zslab::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let synth = SynthCorpus::generate(&SynthConfig::default())?;
    let cfg = FeatureConfig::default();
    println!(
        "{:<12} {:>7} {:>6} {:>6} {:>9}",
        "utterance", "speaker", "frames", "dur_s", "c0_mean"
    );
    for u in synth.utterances.iter().take(6) {
        let m = mfcc39(&u.wave, &cfg)?;
        let f = fbank45(&u.wave, &cfg)?;
        assert_eq!(m.num_frames(), f.num_frames());
        let c0 = (0..m.num_frames()).map(|t| m.frame(t)[0]).sum::<f32>() / m.num_frames() as f32;
        println!(
            "{:<12} {:>7} {:>6} {:>6.2} {:>9.3}",
            u.id,
            u.speaker,
            m.num_frames(),
            m.duration(),
            c0
        );
    }

    let u = &synth.utterances[0];
    let path = out.join(format!("{}.zsfeat", u.id));
    let m = mfcc39(&u.wave, &cfg)?;
    write_features(&path, &m)?;
    let back = read_features(&path)?;
    println!(
        "{}: {} x {} frames round-trip exactly: {}",
        path.display(),
        back.num_frames(),
        back.dim(),
        back.frames() == m.frames()
    );
    Ok(())
}
