//! 8-bit µ-law companding of waveforms, the quantization a sample-level
//! vocoder predicts over.

use super::Waveform;

pub const MU: f64 = 255.0;
/// Number of µ-law codes.
pub const CHANNELS: usize = 256;

fn compress(x: f64) -> f64 {
    x.signum() * (MU * x.abs()).ln_1p() / MU.ln_1p()
}

fn expand(y: f64) -> f64 {
    y.signum() * ((MU.ln_1p() * y.abs()).exp() - 1.0) / MU
}

/// Quantizes one sample to a code in `0..=255`. Inputs outside `[-1, 1]` are
/// clamped; the returned flag reports whether that happened.
pub fn encode_sample(x: f32) -> (u8, bool) {
    let x = f64::from(x);
    let clamped = x.clamp(-1.0, 1.0);
    let y = compress(clamped);
    let code = ((y + 1.0) * 0.5 * MU).round() as u8;
    (code, clamped != x)
}

/// Center, in the linear domain, of the cell of samples that encode to `code`.
pub fn decode_sample(code: u8) -> f32 {
    let c = f64::from(code);
    let lo = (2.0 * (c - 0.5) / MU - 1.0).max(-1.0);
    let hi = (2.0 * (c + 0.5) / MU - 1.0).min(1.0);
    (0.5 * (expand(lo) + expand(hi))) as f32
}

pub fn mulaw_encode(wave: &Waveform) -> Vec<u8> {
    let mut clamped = 0usize;
    let codes = wave
        .samples
        .iter()
        .map(|&s| {
            let (c, hit) = encode_sample(s);
            clamped += usize::from(hit);
            c
        })
        .collect();
    if clamped > 0 {
        log::warn!("mu-law: clamped {clamped} out-of-range samples to [-1, 1]");
    }
    codes
}

pub fn mulaw_decode(codes: &[u8], sample_rate: u32) -> Waveform {
    Waveform {
        samples: codes.iter().map(|&c| decode_sample(c)).collect(),
        sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_zero() {
        assert_eq!(encode_sample(1.0).0, 255);
        assert_eq!(encode_sample(-1.0).0, 0);
        let z = encode_sample(0.0).0;
        assert!(z == 127 || z == 128);
        assert!(decode_sample(z).abs() < 1.0 / 255.0);
    }

    #[test]
    fn out_of_range_clamps() {
        assert_eq!(encode_sample(1.7), (255, true));
        assert_eq!(encode_sample(-3.0), (0, true));
        assert!(!encode_sample(0.3).1);
    }

    #[test]
    fn dense_grid_error_bound() {
        let n = 200_001;
        let mut worst = 0.0f32;
        let mut prev = 0u8;
        for i in 0..n {
            let x = -1.0 + 2.0 * i as f32 / (n - 1) as f32;
            let (c, _) = encode_sample(x);
            assert!(c >= prev, "encode must be monotone");
            prev = c;
            worst = worst.max((decode_sample(c) - x).abs());
        }
        // No 256-level quantizer that is uniform in the companded domain can
        // beat half the width of its widest cell; for mu = 255 that is the
        // cell just below the top one.
        let x = |f: f64| (256f64.powf(f) - 1.0) / 255.0;
        let widest_half = 0.5 * (x(1.0 - 1.0 / 255.0) - x(1.0 - 3.0 / 255.0));
        assert!((widest_half - 0.020_9).abs() < 1e-4);
        assert!(f64::from(worst) <= widest_half + 1e-6, "{worst}");
    }
}
