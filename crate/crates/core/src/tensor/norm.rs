use super::Float;

/// Splits a shape around `axis` into `(outer, len, inner)` strides.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn softmax<F: Float>(x: &[F], shape: &[usize], axis: usize) -> Vec<F> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut y = vec![F::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let max = (0..n).map(|j| x[idx(j)]).fold(F::neg_infinity(), F::max);
            let mut total = F::zero();
            for j in 0..n {
                let e = (x[idx(j)] - max).exp();
                y[idx(j)] = e;
                total += e;
            }
            for j in 0..n {
                y[idx(j)] = y[idx(j)] / total;
            }
        }
    }
    y
}

pub(crate) fn log_softmax<F: Float>(x: &[F], shape: &[usize], axis: usize) -> Vec<F> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut y = vec![F::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let max = (0..n).map(|j| x[idx(j)]).fold(F::neg_infinity(), F::max);
            let lse = max + (0..n).map(|j| (x[idx(j)] - max).exp()).sum::<F>().ln();
            for j in 0..n {
                y[idx(j)] = x[idx(j)] - lse;
            }
        }
    }
    y
}

/// `dx = y * (dy - sum(dy * y))` along the axis.
pub(crate) fn softmax_backward<F: Float>(y: &[F], dy: &[F], shape: &[usize], axis: usize) -> Vec<F> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut dx = vec![F::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let dot: F = (0..n).map(|j| dy[idx(j)] * y[idx(j)]).sum();
            for j in 0..n {
                dx[idx(j)] = y[idx(j)] * (dy[idx(j)] - dot);
            }
        }
    }
    dx
}

/// `dx = dy - softmax(x) * sum(dy)` along the axis, with `y = log_softmax(x)`.
pub(crate) fn log_softmax_backward<F: Float>(y: &[F], dy: &[F], shape: &[usize], axis: usize) -> Vec<F> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut dx = vec![F::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let total: F = (0..n).map(|j| dy[idx(j)]).sum();
            for j in 0..n {
                dx[idx(j)] = dy[idx(j)] - y[idx(j)].exp() * total;
            }
        }
    }
    dx
}

/// Per-channel mean and biased variance of a `(batch, ch, time)` buffer.
pub(crate) fn channel_moments<F: Float>(x: &[F], batch: usize, ch: usize, time: usize) -> (Vec<F>, Vec<F>) {
    let count = F::from_usize(batch * time).unwrap();
    let mut mean = vec![F::zero(); ch];
    let mut var = vec![F::zero(); ch];
    for c in 0..ch {
        let mut s = F::zero();
        for b in 0..batch {
            for &v in &x[(b * ch + c) * time..][..time] {
                s += v;
            }
        }
        let m = s / count;
        let mut q = F::zero();
        for b in 0..batch {
            for &v in &x[(b * ch + c) * time..][..time] {
                q += (v - m) * (v - m);
            }
        }
        mean[c] = m;
        var[c] = q / count;
    }
    (mean, var)
}

/// Normalizes with the given statistics; returns `(y, x_hat)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_norm_apply<F: Float>(
    x: &[F],
    mean: &[F],
    inv_std: &[F],
    gamma: &[F],
    beta: &[F],
    batch: usize,
    ch: usize,
    time: usize,
) -> (Vec<F>, Vec<F>) {
    let mut y = vec![F::zero(); x.len()];
    let mut xhat = vec![F::zero(); x.len()];
    for b in 0..batch {
        for c in 0..ch {
            let base = (b * ch + c) * time;
            for t in 0..time {
                let h = (x[base + t] - mean[c]) * inv_std[c];
                xhat[base + t] = h;
                y[base + t] = gamma[c] * h + beta[c];
            }
        }
    }
    (y, xhat)
}

/// Input gradient of training-mode batch norm, where the statistics depend
/// on the batch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_norm_backward_train<F: Float>(
    dy: &[F],
    xhat: &[F],
    inv_std: &[F],
    gamma: &[F],
    batch: usize,
    ch: usize,
    time: usize,
) -> Vec<F> {
    let count = F::from_usize(batch * time).unwrap();
    let mut dx = vec![F::zero(); dy.len()];
    for c in 0..ch {
        let mut sum_dh = F::zero();
        let mut sum_dh_h = F::zero();
        for b in 0..batch {
            let base = (b * ch + c) * time;
            for t in 0..time {
                let dh = dy[base + t] * gamma[c];
                sum_dh += dh;
                sum_dh_h += dh * xhat[base + t];
            }
        }
        let scale = inv_std[c] / count;
        for b in 0..batch {
            let base = (b * ch + c) * time;
            for t in 0..time {
                let dh = dy[base + t] * gamma[c];
                dx[base + t] = scale * (count * dh - sum_dh - xhat[base + t] * sum_dh_h);
            }
        }
    }
    dx
}
