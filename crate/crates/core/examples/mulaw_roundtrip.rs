//! 8-bit µ-law companding of a synthetic utterance and of a dense grid on
//! [-1, 1].
//!
//! ```text
//! cargo run --release --example mulaw_roundtrip
//! ```

use zslab::features::{decode_sample, encode_sample, mulaw_decode, mulaw_encode, MULAW_CHANNELS};
use zslab::synth::{SynthConfig, SynthCorpus};

fn main() -> zslab::Result<()> {
    let synth = SynthCorpus::generate(&SynthConfig::default())?;
    let wave = &synth.utterances[0].wave;
    let codes = mulaw_encode(wave);
    let back = mulaw_decode(&codes, wave.sample_rate);
    let err = wave
        .samples
        .iter()
        .zip(&back.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0f32, f32::max);
    let snr = 10.0
        * (wave.samples.iter().map(|x| x * x).sum::<f32>()
            / wave
                .samples
                .iter()
                .zip(&back.samples)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f32>())
        .log10();
    println!(
        "{}: {} samples at {} Hz, {MULAW_CHANNELS} levels, max error {err:.5}, SNR {snr:.1} dB",
        synth.utterances[0].id,
        codes.len(),
        wave.sample_rate
    );

    let n = 200_001;
    let (mut worst, mut at) = (0f32, 0f32);
    for i in 0..n {
        let x = -1.0 + 2.0 * i as f32 / (n - 1) as f32;
        let e = (decode_sample(encode_sample(x).0) - x).abs();
        if e > worst {
            (worst, at) = (e, x);
        }
    }
    println!("grid: max error {worst:.5} at x = {at:.4}");
    for code in [0u8, 1, 64, 127, 128, 191, 254, 255] {
        println!("code {code:>3} -> {:+.5}", decode_sample(code));
    }
    Ok(())
}
