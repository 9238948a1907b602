//! 1-d convolution kernels over `(batch, channel, time)` buffers.
//!
//! A transposed convolution is the adjoint of a convolution, so both ops are
//! served by the same three kernels with the roles of input and output swapped.

use super::Float;

/// Geometry of a forward convolution `x[B, cin, tin] -> y[B, cout, tout]`
/// with weights `[cout, cin, k]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub tin: usize,
    pub tout: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn conv_out_len(tin: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
        let padded = tin + 2 * pad;
        if stride == 0 || padded < kernel {
            return None;
        }
        Some((padded - kernel) / stride + 1)
    }

    pub fn transpose_out_len(tin: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
        if tin == 0 || stride == 0 {
            return None;
        }
        ((tin - 1) * stride + kernel).checked_sub(2 * pad)
    }

    /// Output positions `t` whose tap `k` lands inside the input.
    #[inline]
    fn valid_range(&self, k: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad);
        let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
        let hi = if self.tin + p > k {
            ((self.tin + p - k - 1) / s + 1).min(self.tout)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

/// `y[b,o,t] = sum_{c,k} w[o,c,k] * x[b,c,t*s+k-p]`
pub(crate) fn forward<F: Float>(x: &[F], w: &[F], g: &ConvGeom) -> Vec<F> {
    let mut y = vec![F::zero(); g.batch * g.cout * g.tout];
    for b in 0..g.batch {
        for o in 0..g.cout {
            let yrow = &mut y[(b * g.cout + o) * g.tout..][..g.tout];
            for c in 0..g.cin {
                let xrow = &x[(b * g.cin + c) * g.tin..][..g.tin];
                let wrow = &w[(o * g.cin + c) * g.kernel..][..g.kernel];
                for (k, &wv) in wrow.iter().enumerate() {
                    let (lo, hi) = g.valid_range(k);
                    if g.stride == 1 {
                        let off = lo + k - g.pad;
                        for (yv, &xv) in yrow[lo..hi].iter_mut().zip(&xrow[off..off + hi - lo]) {
                            *yv += wv * xv;
                        }
                    } else {
                        for t in lo..hi {
                            yrow[t] += wv * xrow[t * g.stride + k - g.pad];
                        }
                    }
                }
            }
        }
    }
    y
}

/// Adjoint of [`forward`] with respect to `x`.
pub(crate) fn backward_input<F: Float>(dy: &[F], w: &[F], g: &ConvGeom) -> Vec<F> {
    let mut dx = vec![F::zero(); g.batch * g.cin * g.tin];
    for b in 0..g.batch {
        for c in 0..g.cin {
            let dxrow = &mut dx[(b * g.cin + c) * g.tin..][..g.tin];
            for o in 0..g.cout {
                let dyrow = &dy[(b * g.cout + o) * g.tout..][..g.tout];
                let wrow = &w[(o * g.cin + c) * g.kernel..][..g.kernel];
                for (k, &wv) in wrow.iter().enumerate() {
                    let (lo, hi) = g.valid_range(k);
                    if g.stride == 1 {
                        let off = lo + k - g.pad;
                        for (dxv, &dyv) in dxrow[off..off + hi - lo].iter_mut().zip(&dyrow[lo..hi]) {
                            *dxv += wv * dyv;
                        }
                    } else {
                        for t in lo..hi {
                            dxrow[t * g.stride + k - g.pad] += wv * dyrow[t];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of [`forward`] with respect to `w`.
pub(crate) fn backward_weight<F: Float>(x: &[F], dy: &[F], g: &ConvGeom) -> Vec<F> {
    let mut dw = vec![F::zero(); g.cout * g.cin * g.kernel];
    for o in 0..g.cout {
        for c in 0..g.cin {
            let dwrow = &mut dw[(o * g.cin + c) * g.kernel..][..g.kernel];
            for (k, dwv) in dwrow.iter_mut().enumerate() {
                let (lo, hi) = g.valid_range(k);
                let mut acc = F::zero();
                for b in 0..g.batch {
                    let xrow = &x[(b * g.cin + c) * g.tin..][..g.tin];
                    let dyrow = &dy[(b * g.cout + o) * g.tout..][..g.tout];
                    if g.stride == 1 {
                        let off = lo + k - g.pad;
                        for (&dyv, &xv) in dyrow[lo..hi].iter().zip(&xrow[off..off + hi - lo]) {
                            acc += dyv * xv;
                        }
                    } else {
                        for t in lo..hi {
                            acc += dyrow[t] * xrow[t * g.stride + k - g.pad];
                        }
                    }
                }
                *dwv = acc;
            }
        }
    }
    dw
}

/// Adds a per-channel bias to a `(batch, channels, time)` buffer.
pub(crate) fn add_bias<F: Float>(y: &mut [F], bias: &[F], batch: usize, time: usize) {
    let ch = bias.len();
    for b in 0..batch {
        for (c, &bv) in bias.iter().enumerate() {
            for v in &mut y[(b * ch + c) * time..][..time] {
                *v += bv;
            }
        }
    }
}

/// Per-channel sum over batch and time; the bias gradient.
pub(crate) fn channel_sum<F: Float>(dy: &[F], batch: usize, ch: usize, time: usize) -> Vec<F> {
    let mut out = vec![F::zero(); ch];
    for b in 0..batch {
        for (c, acc) in out.iter_mut().enumerate() {
            for &v in &dy[(b * ch + c) * time..][..time] {
                *acc += v;
            }
        }
    }
    out
}
