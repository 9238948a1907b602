//! The tape: every op appends a node, and `backward` walks the tape in reverse.
//!
//! Nodes are only ever appended, so node order is a topological order.

use super::conv::{self, ConvGeom};
use super::norm;
use super::{bct, same_shape, Float, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The operation that produced a node, with whatever it saved for backward.
#[derive(Clone, Debug)]
pub enum Op<F> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    Mse(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: GeomRepr,
    },
    ConvTranspose1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: GeomRepr,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<F>,
        inv_std: Vec<F>,
        train: bool,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    LogSoftmax {
        x: Var,
        axis: usize,
    },
    /// Channel-axis concatenation of `[B, C_i, T]` inputs.
    ConcatChannels(Vec<Var>),
    /// Rows of an embedding table repeated over time: `[S, E] -> [B, E, T]`.
    EmbedBroadcast {
        table: Var,
        ids: Vec<usize>,
    },
    /// Codebook rows laid out as `[B, D, N]` from ids in `(b, n)` order.
    RowLookup {
        table: Var,
        ids: Vec<usize>,
    },
    /// Forward identity, zero gradient.
    StopGradient(Var),
    /// Forward value supplied externally, gradient copied unchanged to the input.
    StraightThrough(Var),
}

/// Opaque copy of a convolution geometry kept on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeomRepr(ConvGeom);

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
    grad: Option<Tensor<F>>,
}

/// Running statistics of a batch-norm layer, updated in training mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats<F = f32> {
    pub mean: Vec<F>,
    pub var: Vec<F>,
    pub momentum: F,
    pub eps: F,
}

impl<F: Float> BatchNormStats<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![F::zero(); channels],
            var: vec![F::one(); channels],
            momentum: F::from_f64c(0.1),
            eps: F::from_f64c(1e-5),
        }
    }

    pub fn cast<G: Float>(&self) -> BatchNormStats<G> {
        let c = |v: &Vec<F>| v.iter().map(|x| G::from_f64c(x.to_f64c())).collect();
        BatchNormStats {
            mean: c(&self.mean),
            var: c(&self.var),
            momentum: G::from_f64c(self.momentum.to_f64c()),
            eps: G::from_f64c(self.eps.to_f64c()),
        }
    }
}

pub struct Graph<F = f32> {
    nodes: Vec<Node<F>>,
}

impl<F: Float> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, parents: &[Var]) -> Var {
        let requires_grad = match op {
            Op::StopGradient(_) => false,
            _ => parents.iter().any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf; its gradient is populated by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn op(&self, v: Var) -> &Op<F> {
        &self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn binary(&mut self, name: &str, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(name, va.shape(), vb.shape())?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    fn unary(&self, a: Var, f: impl Fn(F) -> F) -> Tensor<F> {
        let va = self.value(a);
        Tensor::from_fn(va.shape().to_vec(), |i| f(va.data()[i]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let v = self.unary(a, |x| x * c);
        self.push(v, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: F) -> Var {
        let v = self.unary(a, |x| x + c);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.unary(a, F::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.unary(a, |x| if x > F::zero() { x } else { F::zero() });
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Sum of squared entries.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let sq = self.push(self.unary(a, |x| x * x), Op::Mul(a, a), &[a]);
        self.sum(sq)
    }

    /// Mean squared error over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("mse", va.shape(), vb.shape())?;
        if va.numel() == 0 {
            return Err(Error::shape("mse of empty tensors"));
        }
        let n = F::from_usize(va.numel()).unwrap();
        let s: F = va.data().iter().zip(vb.data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(a, b), &[a, b]))
    }

    /// `x[M, In] @ w[Out, In]^T + b[Out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let (&[m, inp], &[out, win]) = (xs.as_slice(), ws.as_slice()) else {
            return Err(Error::shape(format!("linear: x {xs:?}, w {ws:?}")));
        };
        if inp != win {
            return Err(Error::shape(format!("linear: x {xs:?}, w {ws:?}")));
        }
        if let Some(b) = b {
            same_shape("linear bias", self.shape(b), &[out])?;
        }
        let (xd, wd) = (self.value(x).data(), self.value(w).data());
        let mut y = vec![F::zero(); m * out];
        for i in 0..m {
            let xr = &xd[i * inp..][..inp];
            for o in 0..out {
                let wr = &wd[o * inp..][..inp];
                y[i * out + o] = xr.iter().zip(wr).map(|(&p, &q)| p * q).sum();
            }
        }
        if let Some(b) = b {
            let bd = self.value(b).data();
            for i in 0..m {
                for o in 0..out {
                    y[i * out + o] += bd[o];
                }
            }
        }
        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(Tensor::new(vec![m, out], y)?, Op::Linear { x, w, b }, &parents))
    }

    /// 1-d convolution. `x` is `[C_in, T]` or `[B, C_in, T]`, `w` is
    /// `[C_out, C_in, K]`, `b` is `[C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (batch, cin, tin) = bct(&xs, "conv1d")?;
        let &[cout, wcin, kernel] = self.shape(w) else {
            return Err(Error::shape(format!("conv1d weight {:?}", self.shape(w))));
        };
        if wcin != cin {
            return Err(Error::shape(format!(
                "conv1d: input has {cin} channels, weight expects {wcin}"
            )));
        }
        if let Some(b) = b {
            same_shape("conv1d bias", self.shape(b), &[cout])?;
        }
        let tout = ConvGeom::conv_out_len(tin, kernel, stride, padding).ok_or_else(|| {
            Error::shape(format!(
                "conv1d: length {tin} with padding {padding} is shorter than kernel {kernel} (stride {stride})"
            ))
        })?;
        let geom = ConvGeom {
            batch,
            cin,
            cout,
            kernel,
            tin,
            tout,
            stride,
            pad: padding,
        };
        let mut y = conv::forward(self.value(x).data(), self.value(w).data(), &geom);
        if let Some(b) = b {
            conv::add_bias(&mut y, self.value(b).data(), batch, tout);
        }
        let shape = if xs.len() == 2 {
            vec![cout, tout]
        } else {
            vec![batch, cout, tout]
        };
        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(
            Tensor::new(shape, y)?,
            Op::Conv1d {
                x,
                w,
                b,
                geom: GeomRepr(geom),
            },
            &parents,
        ))
    }

    /// Transposed 1-d convolution, the adjoint of [`Graph::conv1d`]. `w` is
    /// `[C_in, C_out, K]`; output length is `(T - 1) * stride - 2 * padding + K`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (batch, cin, tin) = bct(&xs, "conv_transpose1d")?;
        let &[wcin, cout, kernel] = self.shape(w) else {
            return Err(Error::shape(format!("conv_transpose1d weight {:?}", self.shape(w))));
        };
        if wcin != cin {
            return Err(Error::shape(format!(
                "conv_transpose1d: input has {cin} channels, weight expects {wcin}"
            )));
        }
        if let Some(b) = b {
            same_shape("conv_transpose1d bias", self.shape(b), &[cout])?;
        }
        let tout = ConvGeom::transpose_out_len(tin, kernel, stride, padding)
            .filter(|&t| t > 0)
            .ok_or_else(|| {
                Error::shape(format!(
                    "conv_transpose1d: length {tin}, kernel {kernel}, stride {stride}, padding {padding} gives no output"
                ))
            })?;
        // The matching forward convolution maps [cout, tout] -> [cin, tin].
        let geom = ConvGeom {
            batch,
            cin: cout,
            cout: cin,
            kernel,
            tin: tout,
            tout: tin,
            stride,
            pad: padding,
        };
        if ConvGeom::conv_out_len(tout, kernel, stride, padding) != Some(tin) {
            return Err(Error::shape("conv_transpose1d: inconsistent geometry"));
        }
        let mut y = conv::backward_input(self.value(x).data(), self.value(w).data(), &geom);
        if let Some(b) = b {
            conv::add_bias(&mut y, self.value(b).data(), batch, tout);
        }
        let shape = if xs.len() == 2 {
            vec![cout, tout]
        } else {
            vec![batch, cout, tout]
        };
        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(
            Tensor::new(shape, y)?,
            Op::ConvTranspose1d {
                x,
                w,
                b,
                geom: GeomRepr(geom),
            },
            &parents,
        ))
    }

    /// Batch norm over the channel axis of `[B, C, T]` (or `[C, T]`) input.
    /// Training mode normalizes with batch statistics and folds them into
    /// `stats`; eval mode normalizes with `stats`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BatchNormStats<F>,
        train: bool,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (batch, ch, time) = bct(&xs, "batch_norm")?;
        same_shape("batch_norm gamma", self.shape(gamma), &[ch])?;
        same_shape("batch_norm beta", self.shape(beta), &[ch])?;
        if stats.mean.len() != ch {
            return Err(Error::shape(format!(
                "batch_norm: running stats hold {} channels, input has {ch}",
                stats.mean.len()
            )));
        }
        let xd = self.value(x).data();
        let (mean, inv_std) = if train {
            let count = batch * time;
            if count < 2 {
                return Err(Error::shape(
                    "batch_norm: training mode needs at least two values per channel",
                ));
            }
            let (mean, var) = norm::channel_moments(xd, batch, ch, time);
            let m = stats.momentum;
            let unbias = F::from_usize(count).unwrap() / F::from_usize(count - 1).unwrap();
            for c in 0..ch {
                stats.mean[c] = (F::one() - m) * stats.mean[c] + m * mean[c];
                stats.var[c] = (F::one() - m) * stats.var[c] + m * var[c] * unbias;
            }
            let inv: Vec<F> = var.iter().map(|&v| F::one() / (v + stats.eps).sqrt()).collect();
            (mean, inv)
        } else {
            let inv = stats.var.iter().map(|&v| F::one() / (v + stats.eps).sqrt()).collect();
            (stats.mean.clone(), inv)
        };
        let (y, xhat) = norm::batch_norm_apply(
            xd,
            &mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
            batch,
            ch,
            time,
        );
        Ok(self.push(
            Tensor::new(xs, y)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        ))
    }

    fn check_axis(&self, x: Var, axis: usize, op: &str) -> Result<()> {
        if axis >= self.shape(x).len() {
            return Err(Error::shape(format!(
                "{op}: axis {axis} out of range for {:?}",
                self.shape(x)
            )));
        }
        Ok(())
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis, "softmax")?;
        let v = self.value(x);
        let y = norm::softmax(v.data(), v.shape(), axis);
        let t = Tensor::new(v.shape().to_vec(), y)?;
        Ok(self.push(t, Op::Softmax { x, axis }, &[x]))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis, "log_softmax")?;
        let v = self.value(x);
        let y = norm::log_softmax(v.data(), v.shape(), axis);
        let t = Tensor::new(v.shape().to_vec(), y)?;
        Ok(self.push(t, Op::LogSoftmax { x, axis }, &[x]))
    }

    /// Concatenates `[B, C_i, T]` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
        let &[batch, _, time] = self.shape(*first) else {
            return Err(Error::shape("concat_channels expects [B, C, T] inputs"));
        };
        let mut total = 0;
        for &p in parts {
            match *self.shape(p) {
                [b, c, t] if b == batch && t == time => total += c,
                ref s => {
                    return Err(Error::shape(format!(
                        "concat_channels: {s:?} vs batch {batch}, time {time}"
                    )))
                }
            }
        }
        let mut out = Vec::with_capacity(batch * total * time);
        for b in 0..batch {
            for &p in parts {
                let c = self.shape(p)[1];
                out.extend_from_slice(&self.value(p).data()[b * c * time..][..c * time]);
            }
        }
        Ok(self.push(
            Tensor::new(vec![batch, total, time], out)?,
            Op::ConcatChannels(parts.to_vec()),
            parts,
        ))
    }

    /// Looks up one row of `table[S, E]` per batch item and repeats it over
    /// `time` frames, giving `[B, E, time]`.
    pub fn embed_broadcast(&mut self, table: Var, ids: &[usize], time: usize) -> Result<Var> {
        let &[rows, dim] = self.shape(table) else {
            return Err(Error::shape("embed_broadcast: table must be 2-d"));
        };
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(format!("embedding id {bad} out of range 0..{rows}")));
        }
        let td = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * dim * time);
        for &id in ids {
            for e in 0..dim {
                out.extend(std::iter::repeat_n(td[id * dim + e], time));
            }
        }
        Ok(self.push(
            Tensor::new(vec![ids.len(), dim, time], out)?,
            Op::EmbedBroadcast {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Gathers rows of `table[K, D]` into a `[B, D, N]` (or `[D, N]`) tensor
    /// of the given shape; `ids` are in `(b, n)` order.
    pub fn row_lookup(&mut self, table: Var, ids: &[usize], shape: &[usize]) -> Result<Var> {
        let &[rows, dim] = self.shape(table) else {
            return Err(Error::shape("row_lookup: table must be 2-d"));
        };
        let (batch, d, n) = bct(shape, "row_lookup")?;
        if d != dim || ids.len() != batch * n {
            return Err(Error::shape(format!(
                "row_lookup: {} ids into {shape:?} from a {rows} x {dim} table",
                ids.len()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(format!("row id {bad} out of range 0..{rows}")));
        }
        let td = self.value(table).data();
        let mut out = vec![F::zero(); batch * dim * n];
        for b in 0..batch {
            for t in 0..n {
                let id = ids[b * n + t];
                for d in 0..dim {
                    out[(b * dim + d) * n + t] = td[id * dim + d];
                }
            }
        }
        Ok(self.push(
            Tensor::new(shape.to_vec(), out)?,
            Op::RowLookup {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.push(v, Op::StopGradient(x), &[x])
    }

    /// Emits `value` in the forward pass and hands the incoming gradient to
    /// `x` unchanged in the backward pass.
    pub fn straight_through(&mut self, x: Var, value: Tensor<F>) -> Result<Var> {
        same_shape("straight_through", self.shape(x), value.shape())?;
        Ok(self.push(value, Op::StraightThrough(x), &[x]))
    }

    /// Back-propagates from a scalar `loss`, accumulating into the `grad` of
    /// every reachable trainable leaf. Calling twice without
    /// [`Graph::zero_grads`] doubles the leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(g) => {
                        for (a, b) in g.data_mut().iter_mut().zip(&dy) {
                            *a += *b;
                        }
                    }
                    None => node.grad = Some(Tensor::new(node.value.shape().to_vec(), dy)?),
                }
                continue;
            }
            for (parent, g) in self.local_grads(i, &dy) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            *a += *b;
                        }
                    }
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` for each parent.
    fn local_grads(&self, i: usize, dy: &[F]) -> Vec<(Var, Vec<F>)> {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, dy.to_vec()), (*b, dy.to_vec())],
            Op::Sub(a, b) => vec![(*a, dy.to_vec()), (*b, dy.iter().map(|&g| -g).collect())],
            Op::Mul(a, b) => {
                let da = dy.iter().zip(val(*b)).map(|(&g, &y)| g * y).collect();
                let db = dy.iter().zip(val(*a)).map(|(&g, &x)| g * x).collect();
                vec![(*a, da), (*b, db)]
            }
            Op::Scale(a, c) => vec![(*a, dy.iter().map(|&g| g * *c).collect())],
            Op::AddScalar(a) => vec![(*a, dy.to_vec())],
            Op::Tanh(a) => {
                let y = node.value.data();
                vec![(*a, dy.iter().zip(y).map(|(&g, &t)| g * (F::one() - t * t)).collect())]
            }
            Op::Relu(a) => {
                let x = val(*a);
                vec![(
                    *a,
                    dy.iter()
                        .zip(x)
                        .map(|(&g, &v)| if v > F::zero() { g } else { F::zero() })
                        .collect(),
                )]
            }
            Op::Sum(a) => vec![(*a, vec![dy[0]; val(*a).len()])],
            Op::Mse(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                let k = dy[0] * F::from_f64c(2.0) / F::from_usize(xa.len()).unwrap();
                let da: Vec<F> = xa.iter().zip(xb).map(|(&p, &q)| k * (p - q)).collect();
                let db = da.iter().map(|&g| -g).collect();
                vec![(*a, da), (*b, db)]
            }
            Op::Linear { x, w, b } => {
                let (m, out) = (node.value.shape()[0], node.value.shape()[1]);
                let inp = self.nodes[x.0].value.shape()[1];
                let (xd, wd) = (val(*x), val(*w));
                let mut res = Vec::new();
                if wants(*x) {
                    let mut dx = vec![F::zero(); m * inp];
                    for r in 0..m {
                        for o in 0..out {
                            let g = dy[r * out + o];
                            for j in 0..inp {
                                dx[r * inp + j] += g * wd[o * inp + j];
                            }
                        }
                    }
                    res.push((*x, dx));
                }
                if wants(*w) {
                    let mut dw = vec![F::zero(); out * inp];
                    for r in 0..m {
                        for o in 0..out {
                            let g = dy[r * out + o];
                            for j in 0..inp {
                                dw[o * inp + j] += g * xd[r * inp + j];
                            }
                        }
                    }
                    res.push((*w, dw));
                }
                if let Some(b) = b {
                    let mut db = vec![F::zero(); out];
                    for r in 0..m {
                        for o in 0..out {
                            db[o] += dy[r * out + o];
                        }
                    }
                    res.push((*b, db));
                }
                res
            }
            Op::Conv1d {
                x,
                w,
                b,
                geom: GeomRepr(g),
            } => {
                let mut res = Vec::new();
                if wants(*x) {
                    res.push((*x, conv::backward_input(dy, val(*w), g)));
                }
                if wants(*w) {
                    res.push((*w, conv::backward_weight(val(*x), dy, g)));
                }
                if let Some(b) = b {
                    res.push((*b, conv::channel_sum(dy, g.batch, g.cout, g.tout)));
                }
                res
            }
            Op::ConvTranspose1d {
                x,
                w,
                b,
                geom: GeomRepr(g),
            } => {
                // Output is the conv adjoint over `g`, so dy lives in g's input space.
                let mut res = Vec::new();
                if wants(*x) {
                    res.push((*x, conv::forward(dy, val(*w), g)));
                }
                if wants(*w) {
                    res.push((*w, conv::backward_weight(dy, val(*x), g)));
                }
                if let Some(b) = b {
                    res.push((*b, conv::channel_sum(dy, g.batch, g.cin, g.tin)));
                }
                res
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (batch, ch, time) = bct(node.value.shape(), "batch_norm").expect("checked at build");
                let gd = val(*gamma);
                let mut res = Vec::new();
                if wants(*x) {
                    let dx = if *train {
                        norm::batch_norm_backward_train(dy, xhat, inv_std, gd, batch, ch, time)
                    } else {
                        let mut dx = vec![F::zero(); dy.len()];
                        for bi in 0..batch {
                            for c in 0..ch {
                                let base = (bi * ch + c) * time;
                                for t in 0..time {
                                    dx[base + t] = dy[base + t] * gd[c] * inv_std[c];
                                }
                            }
                        }
                        dx
                    };
                    res.push((*x, dx));
                }
                let mut dgamma = vec![F::zero(); ch];
                let mut dbeta = vec![F::zero(); ch];
                for bi in 0..batch {
                    for c in 0..ch {
                        let base = (bi * ch + c) * time;
                        for t in 0..time {
                            dgamma[c] += dy[base + t] * xhat[base + t];
                            dbeta[c] += dy[base + t];
                        }
                    }
                }
                res.push((*gamma, dgamma));
                res.push((*beta, dbeta));
                res
            }
            Op::Softmax { x, axis } => {
                vec![(
                    *x,
                    norm::softmax_backward(node.value.data(), dy, node.value.shape(), *axis),
                )]
            }
            Op::LogSoftmax { x, axis } => {
                vec![(
                    *x,
                    norm::log_softmax_backward(node.value.data(), dy, node.value.shape(), *axis),
                )]
            }
            Op::ConcatChannels(parts) => {
                let (batch, time) = (node.value.shape()[0], node.value.shape()[2]);
                let total = node.value.shape()[1];
                let mut offset = 0;
                let mut res = Vec::new();
                for &p in parts {
                    let c = self.nodes[p.0].value.shape()[1];
                    let mut g = Vec::with_capacity(batch * c * time);
                    for b in 0..batch {
                        g.extend_from_slice(&dy[(b * total + offset) * time..][..c * time]);
                    }
                    offset += c;
                    res.push((p, g));
                }
                res
            }
            Op::EmbedBroadcast { table, ids } => {
                let dim = self.nodes[table.0].value.shape()[1];
                let time = node.value.shape()[2];
                let mut dt = vec![F::zero(); val(*table).len()];
                for (b, &id) in ids.iter().enumerate() {
                    for e in 0..dim {
                        let s: F = dy[(b * dim + e) * time..][..time].iter().copied().sum();
                        dt[id * dim + e] += s;
                    }
                }
                vec![(*table, dt)]
            }
            Op::RowLookup { table, ids } => {
                let (batch, dim, n) = bct(node.value.shape(), "row_lookup").expect("checked at build");
                let mut dt = vec![F::zero(); val(*table).len()];
                for b in 0..batch {
                    for t in 0..n {
                        let id = ids[b * n + t];
                        for d in 0..dim {
                            dt[id * dim + d] += dy[(b * dim + d) * n + t];
                        }
                    }
                }
                vec![(*table, dt)]
            }
            Op::StopGradient(_) => vec![],
            Op::StraightThrough(x) => vec![(*x, dy.to_vec())],
        }
    }
}
