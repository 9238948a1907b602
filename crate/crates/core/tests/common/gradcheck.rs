//! Fourth-order central finite differences in f64 against the tape's
//! backward pass.
//!
//! Every check compares each gradient entry against its finite-difference
//! estimate with `|a - n| / max(|a|, |n|, floor)`, where `floor` is 1e-6 of
//! the largest gradient magnitude in the whole check. Entries that are zero
//! in exact arithmetic (a conv bias feeding batch norm, say) then compare at
//! the scale of the gradient instead of dividing rounding noise by itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zslab::bottleneck::{catvae_kl, gumbel_softmax_relax, reconstruction_nll, vq_quantize, BottleneckKind, Mode};
use zslab::model::{cast_buffers, init_params, objective, CodecConfig};
use zslab::tensor::{BatchNormStats, Graph, ParamStore, Tensor, Var};

pub const REL_TOL: f64 = 1e-4;
const STEP: f64 = 1e-4;

pub struct GradCheck {
    pub name: String,
    pub cases: usize,
    pub max_rel_err: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= REL_TOL
    }
}

type Build<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> zslab::Result<Var> + 'a;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0f64, |m, x| m.max(x.abs()))
}

fn rel_errors(analytic: &[f64], numeric: &[f64], scale: f64) -> f64 {
    let floor = (1e-6 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h` with `f` evaluated
/// at `x + k h` by `at(k)`.
fn derivative(mut at: impl FnMut(f64) -> f64) -> f64 {
    (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * STEP)
}

/// Scalar reduction of `out` with fixed pseudo-random weights, so every
/// output entry gets a distinct upstream gradient.
fn reduce(g: &mut Graph<f64>, out: Var) -> zslab::Result<Var> {
    if g.value(out).numel() == 1 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    let w = Tensor::from_fn(g.shape(out).to_vec(), |_| rng.gen_range(-1.0..1.0));
    let w = g.constant(w);
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

fn forward(inputs: &[Tensor<f64>], build: &Build) -> (f64, Vec<Tensor<f64>>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars).expect("forward");
    let loss = reduce(&mut g, out).expect("reduce");
    let value = g.value(loss).item();
    g.backward(loss).expect("backward");
    let grads = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect();
    (value, grads)
}

fn loss_only(inputs: &[Tensor<f64>], build: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars).expect("forward");
    let loss = reduce(&mut g, out).expect("reduce");
    g.value(loss).item()
}

/// Largest relative error over all entries of all inputs.
pub fn check_inputs(inputs: &[Tensor<f64>], build: &Build) -> f64 {
    let (_, grads) = forward(inputs, build);
    let numeric: Vec<Vec<f64>> = grads
        .iter()
        .enumerate()
        .map(|(i, grad)| {
            (0..grad.numel())
                .map(|j| {
                    derivative(|k| {
                        let mut x = inputs.to_vec();
                        x[i].data_mut()[j] += k * STEP;
                        loss_only(&x, build)
                    })
                })
                .collect()
        })
        .collect();
    let scale = grads
        .iter()
        .map(|g| max_abs(g.data()))
        .chain(numeric.iter().map(|n| max_abs(n)))
        .fold(0.0, f64::max);
    grads
        .iter()
        .zip(&numeric)
        .map(|(g, n)| rel_errors(g.data(), n, scale))
        .fold(0.0, f64::max)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Uniform in `±[0.1, 1]`, keeping clear of the relu kink.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen() {
            m
        } else {
            -m
        }
    })
}

fn bct(rng: &mut ChaCha8Rng) -> [usize; 3] {
    [rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(2..=7)]
}

/// A random shape and an axis of length at least 2 (a softmax over one
/// entry is the constant 1).
fn normalized_axis(rng: &mut ChaCha8Rng) -> ([usize; 3], usize) {
    let mut s = bct(rng);
    let axis = rng.gen_range(0..3);
    s[axis] = s[axis].max(2);
    (s, axis)
}

/// Runs `make` for `n` random cases and keeps the worst error.
fn over_cases(name: &str, n: usize, seed: u64, mut make: impl FnMut(&mut ChaCha8Rng) -> f64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_rel_err = (0..n).map(|_| make(&mut rng)).fold(0.0, f64::max);
    GradCheck {
        name: name.to_string(),
        cases: n,
        max_rel_err,
    }
}

pub const CASES: usize = 10;

/// One check per differentiable tape operation, each over [`CASES`] random shapes.
pub fn op_checks() -> Vec<GradCheck> {
    let n = CASES;
    vec![
        over_cases("add", n, 1, |r| {
            let s = bct(r);
            check_inputs(&[uniform(r, &s), uniform(r, &s)], &|g, v| g.add(v[0], v[1]))
        }),
        over_cases("sub", n, 2, |r| {
            let s = bct(r);
            check_inputs(&[uniform(r, &s), uniform(r, &s)], &|g, v| g.sub(v[0], v[1]))
        }),
        over_cases("mul", n, 3, |r| {
            let s = bct(r);
            check_inputs(&[uniform(r, &s), uniform(r, &s)], &|g, v| g.mul(v[0], v[1]))
        }),
        over_cases("mul_self", n, 4, |r| {
            let s = bct(r);
            check_inputs(&[uniform(r, &s)], &|g, v| g.mul(v[0], v[0]))
        }),
        over_cases("scale", n, 5, |r| {
            let s = bct(r);
            let c = r.gen_range(-3.0..3.0);
            check_inputs(&[uniform(r, &s)], &move |g, v| Ok(g.scale(v[0], c)))
        }),
        over_cases("add_scalar", n, 6, |r| {
            let s = bct(r);
            let c = r.gen_range(-3.0..3.0);
            check_inputs(&[uniform(r, &s)], &move |g, v| Ok(g.add_scalar(v[0], c)))
        }),
        over_cases("tanh", n, 7, |r| {
            let s = bct(r);
            check_inputs(&[uniform(r, &s)], &|g, v| Ok(g.tanh(v[0])))
        }),
        over_cases("relu", n, 8, |r| {
            let s = bct(r);
            check_inputs(&[off_zero(r, &s)], &|g, v| Ok(g.relu(v[0])))
        }),
        over_cases("sum", n, 9, |r| {
            let s = bct(r);
            check_inputs(&[uniform(r, &s)], &|g, v| Ok(g.sum(v[0])))
        }),
        over_cases("sum_squares", n, 10, |r| {
            let s = bct(r);
            check_inputs(&[uniform(r, &s)], &|g, v| Ok(g.sum_squares(v[0])))
        }),
        over_cases("mse", n, 11, |r| {
            let s = bct(r);
            check_inputs(&[uniform(r, &s), uniform(r, &s)], &|g, v| g.mse(v[0], v[1]))
        }),
        over_cases("linear", n, 12, |r| {
            let (m, i, o) = (r.gen_range(1..=4), r.gen_range(1..=5), r.gen_range(1..=4));
            let inputs = [uniform(r, &[m, i]), uniform(r, &[o, i]), uniform(r, &[o])];
            check_inputs(&inputs, &|g, v| g.linear(v[0], v[1], Some(v[2])))
        }),
        over_cases("conv1d", n, 13, |r| {
            let [b, cin, _] = bct(r);
            let cout = r.gen_range(1..=4);
            let k = r.gen_range(1..=4);
            let stride = r.gen_range(1..=2);
            let pad = r.gen_range(0..=k / 2 + 1);
            let t = r.gen_range(k..k + 6);
            let inputs = [
                uniform(r, &[b, cin, t]),
                uniform(r, &[cout, cin, k]),
                uniform(r, &[cout]),
            ];
            check_inputs(&inputs, &move |g, v| g.conv1d(v[0], v[1], Some(v[2]), stride, pad))
        }),
        over_cases("conv_transpose1d", n, 14, |r| {
            let [b, cin, t] = bct(r);
            let cout = r.gen_range(1..=4);
            let k = r.gen_range(2..=4);
            let stride = r.gen_range(1..=2);
            let pad = r.gen_range(0..k / 2 + 1);
            let inputs = [
                uniform(r, &[b, cin, t]),
                uniform(r, &[cin, cout, k]),
                uniform(r, &[cout]),
            ];
            check_inputs(&inputs, &move |g, v| {
                g.conv_transpose1d(v[0], v[1], Some(v[2]), stride, pad)
            })
        }),
        over_cases("batch_norm_train", n, 15, |r| {
            let [b, c, t] = bct(r);
            let b = b.max(2);
            let inputs = [uniform(r, &[b, c, t]), uniform(r, &[c]), uniform(r, &[c])];
            check_inputs(&inputs, &move |g, v| {
                let mut stats = BatchNormStats::new(c);
                g.batch_norm(v[0], v[1], v[2], &mut stats, true)
            })
        }),
        over_cases("batch_norm_eval", n, 16, |r| {
            let [b, c, t] = bct(r);
            let mut stats = BatchNormStats::<f64>::new(c);
            stats.mean = (0..c).map(|_| r.gen_range(-0.5..0.5)).collect();
            stats.var = (0..c).map(|_| r.gen_range(0.2..2.0)).collect();
            let inputs = [uniform(r, &[b, c, t]), uniform(r, &[c]), uniform(r, &[c])];
            check_inputs(&inputs, &move |g, v| {
                let mut s = stats.clone();
                g.batch_norm(v[0], v[1], v[2], &mut s, false)
            })
        }),
        over_cases("softmax", n, 17, |r| {
            let (s, axis) = normalized_axis(r);
            check_inputs(&[uniform(r, &s)], &move |g, v| g.softmax(v[0], axis))
        }),
        over_cases("log_softmax", n, 18, |r| {
            let (s, axis) = normalized_axis(r);
            check_inputs(&[uniform(r, &s)], &move |g, v| g.log_softmax(v[0], axis))
        }),
        over_cases("concat_channels", n, 19, |r| {
            let [b, _, t] = bct(r);
            let parts: Vec<Tensor<f64>> = (0..r.gen_range(1..=3))
                .map(|_| {
                    let c = r.gen_range(1..=3);
                    uniform(r, &[b, c, t])
                })
                .collect();
            check_inputs(&parts, &|g, v| g.concat_channels(v))
        }),
        over_cases("embed_broadcast", n, 20, |r| {
            let (rows, dim, b, t) = (
                r.gen_range(1..=4),
                r.gen_range(1..=4),
                r.gen_range(1..=4),
                r.gen_range(1..=5),
            );
            let ids: Vec<usize> = (0..b).map(|_| r.gen_range(0..rows)).collect();
            check_inputs(&[uniform(r, &[rows, dim])], &move |g, v| {
                g.embed_broadcast(v[0], &ids, t)
            })
        }),
        over_cases("row_lookup", n, 21, |r| {
            let (k, d, b, t) = (
                r.gen_range(1..=5),
                r.gen_range(1..=4),
                r.gen_range(1..=3),
                r.gen_range(1..=5),
            );
            let ids: Vec<usize> = (0..b * t).map(|_| r.gen_range(0..k)).collect();
            check_inputs(&[uniform(r, &[k, d])], &move |g, v| {
                g.row_lookup(v[0], &ids, &[b, d, t])
            })
        }),
    ]
}

/// The loss terms of the three models, checked against finite differences of
/// plain-f64 oracles where stop-gradients make the tape's forward value and
/// its gradient disagree on purpose.
pub fn loss_checks() -> Vec<GradCheck> {
    let n = CASES;
    vec![
        over_cases("reconstruction_nll", n, 31, |r| {
            let s = bct(r);
            let sigma = r.gen_range(0.3..2.0);
            check_inputs(&[uniform(r, &s), uniform(r, &s)], &move |g, v| {
                reconstruction_nll(g, v[0], v[1], sigma)
            })
        }),
        over_cases("catvae_kl", n, 32, |r| {
            let s = bct(r);
            let s = [s[0], s[1].max(2), s[2]];
            check_inputs(&[uniform(r, &s)], &|g, v| catvae_kl(g, v[0]))
        }),
        over_cases("gumbel_softmax_relax", n, 33, |r| {
            let s = bct(r);
            let s = [s[0], s[1].max(2), s[2]];
            let noise = uniform(r, &s);
            let tau = r.gen_range(0.1..1.0);
            check_inputs(&[uniform(r, &s)], &move |g, v| {
                gumbel_softmax_relax(g, v[0], noise.clone(), tau)
            })
        }),
        over_cases("vq_codebook_and_commitment", n, 34, vq_terms_case),
    ]
}

/// VQ auxiliary loss `||sg(h) - e||^2 + beta ||h - sg(e)||^2`: its gradient
/// w.r.t. the codebook is that of the first term alone and w.r.t. `h` that of
/// the second, each checked by finite differences with the ids held fixed.
fn vq_terms_case(r: &mut ChaCha8Rng) -> f64 {
    let [b, d, t] = bct(r);
    let k = r.gen_range(2..=5);
    let beta = r.gen_range(0.1..30.0);
    let h = uniform(r, &[b, d, t]);
    let cb = uniform(r, &[k, d]);

    let mut g = Graph::new();
    let hv = g.param(h.clone());
    let cv = g.param(cb.clone());
    let out = vq_quantize(&mut g, hv, cv, beta).unwrap();
    let ids = out.symbol_ids.clone();
    g.backward(out.aux_loss).unwrap();
    let gh = g.grad(hv).unwrap().data().to_vec();
    let gc = g.grad(cv).map_or(vec![0.0; k * d], |t| t.data().to_vec());

    let dist = |h: &[f64], cb: &[f64]| -> f64 {
        let mut s = 0.0;
        for bi in 0..b {
            for ti in 0..t {
                let id = ids[bi * t + ti];
                for di in 0..d {
                    let x = h[(bi * d + di) * t + ti] - cb[id * d + di];
                    s += x * x;
                }
            }
        }
        s
    };
    let fd = |base: &[f64], f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        (0..base.len())
            .map(|j| {
                derivative(|k| {
                    let mut p = base.to_vec();
                    p[j] += k * STEP;
                    f(&p)
                })
            })
            .collect()
    };
    let num_c = fd(cb.data(), &|c| dist(h.data(), c));
    let num_h = fd(h.data(), &|x| beta * dist(x, cb.data()));
    let scale = [&gc, &num_c, &gh, &num_h]
        .iter()
        .map(|v| max_abs(v))
        .fold(0.0, f64::max);
    rel_errors(&gc, &num_c, scale).max(rel_errors(&gh, &num_h, scale))
}

fn tiny_config() -> CodecConfig {
    let mut cfg = CodecConfig::desk(BottleneckKind::Catvae);
    cfg.channels = 3;
    cfg.num_symbols = 3;
    cfg.speaker_embed_dim = 2;
    cfg.downsample_factor = 2;
    cfg.sigma = 0.7;
    cfg.training.batch_size = 2;
    cfg.training.crop_frames = 4;
    cfg
}

/// Full CatVAE training objective (encoder, batch norm, relaxed bottleneck,
/// KL, speaker-conditioned decoder) in f64 against finite differences over
/// every parameter entry. Each case draws a new init, batch and noise seed.
/// Batch-norm scales and shifts are drawn at random too: at their default
/// `gamma = 1, beta = 0` a constant channel lands exactly on a relu kink.
pub fn objective_check(cases: usize) -> GradCheck {
    over_cases("catvae_objective", cases, 41, |r| {
        let cfg = tiny_config();
        let (b, l) = (cfg.training.batch_size, cfg.training.crop_frames);
        let (p32, buf32) = init_params(&cfg, 2, &mut ChaCha8Rng::seed_from_u64(r.gen())).unwrap();
        let mut params: ParamStore<f64> = p32.cast();
        for p in params.iter_mut() {
            if p.name.ends_with(".gamma") {
                p.value.data_mut().iter_mut().for_each(|v| *v = r.gen_range(0.5..1.5));
            } else if p.name.ends_with(".beta") {
                p.value.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
            }
        }
        let buffers = cast_buffers::<f32, f64>(&buf32);
        let mfcc = uniform(r, &[b, 39, l]);
        let fbank = uniform(r, &[b, 45, l]);
        let speakers: Vec<usize> = (0..b).map(|_| r.gen_range(0..2)).collect();
        let noise_seed: u64 = r.gen();

        let eval = |params: &ParamStore<f64>, grads: bool| -> (f64, Option<ParamStore<f64>>) {
            let mut params = params.clone();
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let mut bufs = buffers.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            let obj = objective(
                &cfg,
                &params,
                &bound,
                &mut bufs,
                &mut g,
                mfcc.clone(),
                fbank.clone(),
                &speakers,
                Mode::Train,
                0.5,
                &mut rng,
            )
            .unwrap();
            let total = g.value(obj.total).item();
            if !grads {
                return (total, None);
            }
            g.backward(obj.total).unwrap();
            params.zero_grads();
            params.accumulate_grads(&g, &bound);
            (total, Some(params))
        };

        let (_, with_grads) = eval(&params, true);
        let with_grads = with_grads.unwrap();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        let names: Vec<String> = params.names().map(String::from).collect();
        for name in &names {
            let p = with_grads.get(name).unwrap();
            analytic.push(
                p.grad
                    .as_ref()
                    .map_or(vec![0.0; p.value.numel()], |t| t.data().to_vec()),
            );
            numeric.push(
                (0..p.value.numel())
                    .map(|j| {
                        derivative(|k| {
                            let mut x = params.clone();
                            x.get_mut(name).unwrap().value.data_mut()[j] += k * STEP;
                            eval(&x, false).0
                        })
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        let scale = analytic.iter().chain(&numeric).map(|v| max_abs(v)).fold(0.0, f64::max);
        analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| rel_errors(a, n, scale))
            .fold(0.0, f64::max)
    })
}
