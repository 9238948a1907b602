use crate::error::{Error, Result};

/// `1 - cos(u, v)`; 0 between two zero vectors and 1 between a zero and a
/// non-zero vector.
pub fn cosine_distance(u: &[f32], v: &[f32]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0f64, 0f64, 0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    match (nu > 0.0, nv > 0.0) {
        (false, false) => 0.0,
        (true, true) => 1.0 - (dot / (nu * nv).sqrt()).clamp(-1.0, 1.0),
        _ => 1.0,
    }
}

/// Average frame-wise cosine distance along the minimum-cost DTW alignment
/// between row-major `a[Ta, dim]` and `b[Tb, dim]`.
///
/// Steps are `(1,0)`, `(0,1)` and `(1,1)`. The path minimizing the summed
/// cost is chosen, equal sums going to the shorter path, and its sum is
/// divided by its length in cells.
pub fn dtw_cosine(a: &[f32], b: &[f32], dim: usize) -> Result<f64> {
    if dim == 0 || a.is_empty() || b.is_empty() {
        return Err(Error::invalid("dtw_cosine needs non-empty sequences"));
    }
    if !a.len().is_multiple_of(dim) || !b.len().is_multiple_of(dim) {
        return Err(Error::shape(format!(
            "dtw_cosine: lengths {} and {} are not multiples of dim {dim}",
            a.len(),
            b.len()
        )));
    }
    let (ta, tb) = (a.len() / dim, b.len() / dim);
    // (cost, length) per cell of the current and previous rows.
    let mut prev = vec![(f64::INFINITY, 0u32); tb];
    let mut cur = vec![(f64::INFINITY, 0u32); tb];
    let better = |x: (f64, u32), y: (f64, u32)| if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x };
    for i in 0..ta {
        let ai = &a[i * dim..][..dim];
        for j in 0..tb {
            let c = cosine_distance(ai, &b[j * dim..][..dim]);
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, u32::MAX);
                if i > 0 {
                    best = better(best, prev[j]);
                }
                if j > 0 {
                    best = better(best, cur[j - 1]);
                }
                if i > 0 && j > 0 {
                    best = better(best, prev[j - 1]);
                }
                best
            };
            cur[j] = (best.0 + c, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, len) = prev[tb - 1];
    Ok(cost / f64::from(len))
}
