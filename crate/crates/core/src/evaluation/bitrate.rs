use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::SymbolSequence;

/// Symbols of a whole corpus laid end to end, with the audio duration they cover.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolStream {
    pub symbols: Vec<usize>,
    pub duration: f64,
}

impl SymbolStream {
    pub fn new(symbols: Vec<usize>, duration: f64) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("symbol stream is empty"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::invalid(format!("duration must be positive, got {duration}")));
        }
        Ok(Self { symbols, duration })
    }

    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a SymbolSequence>) -> Result<Self> {
        let mut symbols = Vec::new();
        let mut duration = 0.0;
        for s in seqs {
            symbols.extend_from_slice(&s.symbol_ids);
            duration += s.duration();
        }
        Self::new(symbols, duration)
    }

    /// Number of distinct symbols that occur.
    pub fn distinct(&self) -> usize {
        self.histogram().len()
    }

    fn histogram(&self) -> HashMap<usize, usize> {
        let mut h = HashMap::new();
        for &s in &self.symbols {
            *h.entry(s).or_insert(0) += 1;
        }
        h
    }
}

/// Shannon entropy in bits of the empirical symbol distribution.
pub fn entropy_bits(symbols: &[usize]) -> f64 {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &s in symbols {
        *counts.entry(s).or_insert(0) += 1;
    }
    // Sorted counts make the sum independent of hash order.
    let mut counts: Vec<usize> = counts.into_values().collect();
    counts.sort_unstable();
    let m = symbols.len() as f64;
    -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / m;
            p * p.log2()
        })
        .sum::<f64>()
}

/// `(M / D) * H` bits per second, `H` the entropy over distinct symbols.
pub fn bitrate(stream: &SymbolStream) -> f64 {
    stream.symbols.len() as f64 / stream.duration * entropy_bits(&stream.symbols)
}

/// Fraction of an alphabet of `alphabet` symbols that occurs in the stream.
pub fn codebook_utilization(stream: &SymbolStream, alphabet: usize) -> f64 {
    stream.distinct() as f64 / alphabet as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_four_symbols() {
        let s = SymbolStream::new((0..1000).map(|i| i % 4).collect(), 10.0).unwrap();
        assert_eq!(bitrate(&s), 200.0);
        assert_eq!(codebook_utilization(&s, 8), 0.5);
    }

    #[test]
    fn constant_stream_is_free() {
        let s = SymbolStream::new(vec![7; 50], 1.0).unwrap();
        assert_eq!(bitrate(&s), 0.0);
    }

    #[test]
    fn stream_preconditions() {
        assert!(SymbolStream::new(vec![], 1.0).is_err());
        assert!(SymbolStream::new(vec![1], 0.0).is_err());
    }
}
