//! The twelve acceptance criteria, each reported as one PASS/FAIL line on
//! stderr (written past the test harness's capture so it always shows).
//!
//! Criterion 11 cannot be met by 8-bit µ-law with µ = 255: its largest
//! quantization cell is wider than 0.04, so some input is more than 0.02 from
//! any reconstruction value. It is evaluated at the stated bound, reported,
//! and excluded from the pass/fail verdict of `acceptance`. The ignored test
//! `criterion_11_strict` asserts it on its own.

mod common;

use std::io::Write;
use std::time::Instant;

use common::gradcheck::{loss_checks, objective_check, op_checks, CASES};
use common::oracles::{brute_force_dtw, entropy_oracle, synthetic_abx, Frames};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zslab::bottleneck::{
    catvae_kl, catvae_sample, nearest_codes, ste_binarize, vq_quantize, AnnealSchedule, BottleneckKind, Mode,
};
use zslab::evaluation::{abx_error_rate, bitrate, dtw_cosine, eval_report, AbxTask, SymbolStream};
use zslab::features::{decode_sample, encode_sample, FeatureConfig, FeatureKind, FeatureSequence};
use zslab::model::{
    load_checkpoint, run_training, save_checkpoint, CodecConfig, CodecModel, Corpus, FeatureNorm, LossReport,
};
use zslab::synth::{SynthConfig, SynthCorpus};
use zslab::tensor::{Graph, Tensor};

/// Criteria known to be unattainable as stated; see the module docs.
const KNOWN_UNATTAINABLE: &[u32] = &[11];

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(o: &Outcome) {
    let line = format!(
        "acceptance criterion {:>2} {:<30} {}  {}\n",
        o.id,
        o.name,
        if o.passed { "PASS" } else { "FAIL" },
        o.detail
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn c01_gradients() -> Outcome {
    let start = Instant::now();
    let mut checks = op_checks();
    checks.extend(loss_checks());
    checks.push(objective_check(CASES));
    let secs = start.elapsed().as_secs_f64();
    let worst = checks
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .unwrap();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    Outcome {
        id: 1,
        name: "gradient integrity",
        passed: failed.is_empty() && checks.iter().all(|c| c.cases >= 10) && secs < 60.0,
        detail: format!(
            "{} checks x {} shapes, worst {} at {:.2e}, failed {:?}, {:.1} s",
            checks.len(),
            CASES,
            worst.name,
            worst.max_rel_err,
            failed,
            secs
        ),
    }
}

fn c02_ste() -> Outcome {
    let n = 100_000;
    let targets = [-0.5, 0.0, 0.7];
    let h = Tensor::from_fn(vec![1, 3, n], |i| targets[i / n]);
    let mut g = Graph::<f64>::new();
    let hv = g.param(h);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let out = ste_binarize(&mut g, hv, Mode::Train, &mut rng).unwrap();
    let z = g.value(out.z).data().to_vec();
    let means: Vec<f64> = (0..3)
        .map(|k| z[k * n..(k + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let mean_ok = means.iter().zip(&targets).all(|(m, t)| (m - t).abs() < 0.01);

    let mut wrng = ChaCha8Rng::seed_from_u64(3);
    let w = Tensor::from_fn(vec![1, 3, n], |_| wrng.gen_range(-1.0..1.0));
    let wv = g.constant(w.clone());
    let prod = g.mul(out.z, wv).unwrap();
    let loss = g.sum(prod);
    g.backward(loss).unwrap();
    let grad_ok = g.grad(hv).unwrap().data() == w.data();
    Outcome {
        id: 2,
        name: "STE estimator",
        passed: mean_ok && grad_ok,
        detail: format!("E[z] = {means:.4?} for h = {targets:?}; gradient copied exactly: {grad_ok}"),
    }
}

fn c03_vq() -> Outcome {
    let (n, k, d) = (1000, 64, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = Tensor::from_fn(vec![1, d, n], |_| rng.gen_range(-1.0..1.0));
    let cb = Tensor::from_fn(vec![k, d], |_| rng.gen_range(-1.0..1.0));
    let oracle: Vec<usize> = (0..n)
        .map(|t| {
            let mut best = (f64::INFINITY, 0);
            for j in 0..k {
                let dist: f64 = (0..d)
                    .map(|c| {
                        let diff: f64 = h.data()[c * n + t] - cb.data()[j * d + c];
                        diff * diff
                    })
                    .sum();
                if dist < best.0 {
                    best = (dist, j);
                }
            }
            best.1
        })
        .collect();
    let mut g = Graph::<f64>::new();
    let hv = g.param(h.clone());
    let cv = g.param(cb.clone());
    let ids = vq_quantize(&mut g, hv, cv, 0.25).unwrap().symbol_ids;
    let direct = nearest_codes(&h, &cb).unwrap();
    let mismatches = ids.iter().zip(&oracle).filter(|(a, b)| a != b).count();
    Outcome {
        id: 3,
        name: "VQ nearest neighbour",
        passed: ids == oracle && direct == oracle,
        detail: format!("{n} vectors, K = {k}: {mismatches} mismatches"),
    }
}

fn c04_catvae() -> Outcome {
    let pi = [0.1, 0.2, 0.3, 0.4];
    let n = 100_000;
    let logits = Tensor::from_fn(vec![1, 4, n], |i| f64::ln(pi[i / n]));
    let mut g = Graph::<f64>::new();
    let lv = g.param(logits);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ids = catvae_sample(&mut g, lv, 1.0, Mode::Train, &mut rng)
        .unwrap()
        .symbol_ids;
    let mut freq = [0f64; 4];
    for &i in &ids {
        freq[i] += 1.0 / n as f64;
    }
    let freq_ok = freq.iter().zip(&pi).all(|(f, p)| (f - p).abs() <= 0.02);

    let kl = |l: Vec<f64>| {
        let mut g = Graph::<f64>::new();
        let v = g.param(Tensor::new(vec![1, l.len(), 1], l).unwrap());
        let k = catvae_kl(&mut g, v).unwrap();
        g.value(k).item()
    };
    let kl_uniform = kl(vec![0.3; 4]);
    let ln4 = 4f64.ln();
    let gaps: Vec<f64> = [5.0, 10.0, 20.0, 40.0]
        .iter()
        .map(|&m| (ln4 - kl(vec![m, 0.0, 0.0, 0.0])).abs())
        .collect();
    let limit_ok = gaps.windows(2).all(|w| w[1] < w[0]) && gaps[3] < 1e-9;

    let sched = AnnealSchedule::default();
    let tau_ok = sched.tau(0) == 1.0 && sched.tau(sched.total_steps) == 0.1;
    Outcome {
        id: 4,
        name: "CatVAE sampling and KL",
        passed: freq_ok && kl_uniform.abs() <= 1e-9 && limit_ok && tau_ok,
        detail: format!(
            "freq {freq:.4?} vs {pi:?}; KL(uniform) = {kl_uniform:.1e}; log K - KL = {}; tau {} -> {}",
            gaps.iter().map(|g| format!("{g:.1e}")).collect::<Vec<_>>().join("/"),
            sched.tau(0),
            sched.tau(sched.total_steps)
        ),
    }
}

fn c05_dtw() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0f64;
    for _ in 0..1000 {
        let dim = rng.gen_range(1..=4);
        let ta = rng.gen_range(1..=6);
        let tb = rng.gen_range(1..=6);
        let a: Vec<f32> = (0..ta * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..tb * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max((dtw_cosine(&a, &b, dim).unwrap() - brute_force_dtw(&a, &b, dim)).abs());
    }
    Outcome {
        id: 5,
        name: "DTW path enumeration",
        passed: worst <= 1e-9,
        detail: format!("1000 cases, max |dtw - oracle| = {worst:.1e}"),
    }
}

fn c06_abx() -> Outcome {
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rate = |frames: Frames, rng: &mut ChaCha8Rng| {
        let (task, reps) = synthetic_abx(n, 8, frames, rng);
        abx_error_rate(&task, &reps).unwrap()
    };
    let sep = rate(Frames::Clusters { sep: 3.0 }, &mut rng);
    let constant = rate(Frames::Constant, &mut rng);
    let noise = rate(Frames::Noise, &mut rng);
    let chance = |e: f64| (e - 0.5).abs() <= 0.02;
    Outcome {
        id: 6,
        name: "ABX sanity",
        passed: sep < 0.05 && chance(constant) && chance(noise),
        detail: format!(
            "{n} triples: separable {:.2}%, constant {:.2}%, noise {:.2}%",
            100.0 * sep,
            100.0 * constant,
            100.0 * noise
        ),
    }
}

/// The synthetic corpus, its ABX task and normalization, shared by the
/// training criteria.
struct Desk {
    corpus: Corpus,
    task: AbxTask,
    norm: FeatureNorm,
}

impl Desk {
    fn new() -> Self {
        let synth = SynthCorpus::generate(&SynthConfig::default()).unwrap();
        let corpus = synth.features(&FeatureConfig::default()).unwrap();
        let task = synth.abx_task(2000, 0);
        let norm = FeatureNorm::fit(corpus.utterances.iter().map(|u| &u.mfcc)).unwrap();
        Self { corpus, task, norm }
    }

    fn train(&self, config: CodecConfig) -> (CodecModel, Vec<LossReport>) {
        let steps = config.training.total_steps;
        let mut model = CodecModel::new(config, self.corpus.speakers(), self.norm.clone()).unwrap();
        let run = run_training(&mut model, &self.corpus, None, steps, |_, _| {}).unwrap();
        (model, run.losses)
    }

    fn bitrate(&self, model: &CodecModel) -> f64 {
        let seqs: Vec<_> = self
            .corpus
            .utterances
            .iter()
            .map(|u| model.encode(&u.mfcc).unwrap().symbols)
            .collect();
        bitrate(&SymbolStream::from_sequences(&seqs).unwrap())
    }
}

fn desk(kind: BottleneckKind, seed: u64) -> CodecConfig {
    let mut c = CodecConfig::desk(kind);
    c.training.seed = seed;
    c
}

fn c07_bitrate(desk_env: &Desk, vq4: &CodecModel) -> Outcome {
    let syms: Vec<usize> = (0..1000).map(|i| i % 4).collect();
    let uniform = bitrate(&SymbolStream::new(syms, 10.0).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0f64;
    for _ in 0..200 {
        let len = rng.gen_range(1..2000);
        let k = rng.gen_range(1..64);
        let s: Vec<usize> = (0..len).map(|_| rng.gen_range(0..k)).collect();
        let d = rng.gen_range(0.5..60.0);
        let want = len as f64 / d * entropy_oracle(&s);
        worst = worst.max((bitrate(&SymbolStream::new(s, d).unwrap()) - want).abs());
    }

    let mut c8 = desk(BottleneckKind::Vqvae, 0);
    c8.downsample_factor = 8;
    let (vq8, _) = desk_env.train(c8);
    let (b4, b8) = (desk_env.bitrate(vq4), desk_env.bitrate(&vq8));
    let ratio = b8 / b4;
    Outcome {
        id: 7,
        name: "bitrate",
        passed: uniform == 200.0 && worst <= 1e-9 && (0.4..=0.6).contains(&ratio),
        detail: format!(
            "uniform-4 = {uniform} bps; oracle gap {worst:.1e}; x4 {b4:.2} bps, x8 {b8:.2} bps, ratio {ratio:.3}"
        ),
    }
}

fn c08_shapes() -> Outcome {
    let cfg = CodecConfig::desk(BottleneckKind::Vqvae);
    let model = CodecModel::new(cfg, vec!["s1".into()], FeatureNorm::identity(39)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut seen = Vec::new();
    let mut ok = true;
    for t in [4usize, 100, 1024] {
        let x = FeatureSequence::new(
            FeatureKind::Mfcc39,
            (0..t * 39).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            t,
            0.01,
        )
        .unwrap();
        let enc = model.encode(&x).unwrap();
        let n = enc.symbols.symbol_ids.len();
        let y = model.decode(&enc.z, Some("s1")).unwrap();
        ok &= n == t / 4 && enc.z.shape()[1] == t / 4 && y.num_frames() == t && y.dim() == 45;
        seen.push(format!("T={t}: N={n}, decoded {}", y.num_frames()));
    }
    Outcome {
        id: 8,
        name: "shape law",
        passed: ok,
        detail: seen.join("; "),
    }
}

fn c09_training(runs: &[(BottleneckKind, &[LossReport], f64)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, losses, secs) in runs {
        let finite = losses
            .iter()
            .all(|r| r.recon.is_finite() && r.aux.is_finite() && r.total.is_finite());
        let tail = &losses[losses.len() - 100..];
        let end = tail.iter().map(|r| r.recon).sum::<f64>() / tail.len() as f64;
        let drop = 1.0 - end / losses[0].recon;
        ok &= finite && losses.len() == 2000 && drop >= 0.5 && *secs < 600.0;
        parts.push(format!(
            "{kind} {:.0} -> {end:.0} (-{:.0}%, {secs:.0} s)",
            losses[0].recon,
            100.0 * drop
        ));
    }
    Outcome {
        id: 9,
        name: "desk-scale training",
        passed: ok,
        detail: parts.join("; "),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn c10_ablation(desk_env: &Desk, vq_seed0: &CodecModel) -> Outcome {
    let mut cond = Vec::new();
    let mut plain = Vec::new();
    for seed in 0..3 {
        let trained;
        let model = if seed == 0 {
            vq_seed0
        } else {
            trained = desk_env.train(desk(BottleneckKind::Vqvae, seed)).0;
            &trained
        };
        let mut c = desk(BottleneckKind::Vqvae, seed);
        c.speaker_embed_dim = 0;
        let (ablation, _) = desk_env.train(c);
        let r = eval_report(model, Some(&ablation), &desk_env.task, &desk_env.corpus, None).unwrap();
        cond.push(r.abx_output_spkr_cond);
        plain.push(r.abx_output_no_spkr_cond.unwrap());
    }
    let (mc, mp) = (median(cond.clone()), median(plain.clone()));
    let pct = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{:.2}", 100.0 * x))
            .collect::<Vec<_>>()
            .join("/")
    };
    Outcome {
        id: 10,
        name: "speaker-conditioning ablation",
        passed: mc <= mp,
        detail: format!(
            "output ABX with conditioning {}% (median {:.2}), without {}% (median {:.2})",
            pct(&cond),
            100.0 * mc,
            pct(&plain),
            100.0 * mp
        ),
    }
}

fn c11_mulaw() -> Outcome {
    let n = 2_000_001;
    let mut worst = 0f64;
    let mut at = 0.0;
    let (mut lo, mut hi) = (u8::MAX, u8::MIN);
    for i in 0..n {
        let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
        let (code, _) = encode_sample(x as f32);
        lo = lo.min(code);
        hi = hi.max(code);
        let err = (f64::from(decode_sample(code)) - f64::from(x as f32)).abs();
        if err > worst {
            worst = err;
            at = x;
        }
    }
    Outcome {
        id: 11,
        name: "mu-law round trip",
        passed: worst <= 0.02 && lo == 0 && hi == 255,
        detail: format!("max error {worst:.4} at x = {at:.4} (bound 0.02); codes span [{lo}, {hi}]"),
    }
}

fn c12_resume() -> Outcome {
    let desk_env = Desk::new();
    let mut ok = true;
    let mut parts = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    for kind in [BottleneckKind::Ste, BottleneckKind::Vqvae, BottleneckKind::Catvae] {
        let mut cfg = desk(kind, 12);
        cfg.training.total_steps = 120;
        let (full, full_losses) = desk_env.train(cfg.clone());

        let mut first = CodecModel::new(cfg, desk_env.corpus.speakers(), desk_env.norm.clone()).unwrap();
        let head = run_training(&mut first, &desk_env.corpus, None, 60, |_, _| {})
            .unwrap()
            .losses;
        let path = dir.path().join(format!("{kind}.zsckpt"));
        save_checkpoint(&first, &path).unwrap();
        drop(first);
        let mut resumed = load_checkpoint(&path).unwrap();
        let tail = run_training(&mut resumed, &desk_env.corpus, None, 120, |_, _| {})
            .unwrap()
            .losses;

        let losses_same = head
            .iter()
            .chain(&tail)
            .map(|r| r.total.to_bits())
            .eq(full_losses.iter().map(|r| r.total.to_bits()));
        let params_same = full.params.iter().zip(resumed.params.iter()).all(|(a, b)| {
            a.name == b.name
                && a.value
                    .data()
                    .iter()
                    .map(|v| v.to_bits())
                    .eq(b.value.data().iter().map(|v| v.to_bits()))
        });
        let buffers_same = full.buffers == resumed.buffers;
        ok &= losses_same && params_same && buffers_same && resumed.step == 120;
        parts.push(format!(
            "{kind}: losses {losses_same}, params {params_same}, bn stats {buffers_same}"
        ));
    }
    Outcome {
        id: 12,
        name: "bit-exact resume",
        passed: ok,
        detail: parts.join("; "),
    }
}

#[test]
fn acceptance() {
    let mut outcomes = Vec::new();
    let mut record = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };
    record(c01_gradients());
    record(c02_ste());
    record(c03_vq());
    record(c04_catvae());
    record(c05_dtw());
    record(c06_abx());

    let desk_env = Desk::new();
    let mut trained = Vec::new();
    for kind in [BottleneckKind::Ste, BottleneckKind::Vqvae, BottleneckKind::Catvae] {
        let start = Instant::now();
        let (model, losses) = desk_env.train(desk(kind, 0));
        trained.push((kind, model, losses, start.elapsed().as_secs_f64()));
    }
    let vq = &trained[1].1;
    record(c07_bitrate(&desk_env, vq));
    record(c08_shapes());
    let runs: Vec<(BottleneckKind, &[LossReport], f64)> =
        trained.iter().map(|(k, _, l, s)| (*k, l.as_slice(), *s)).collect();
    record(c09_training(&runs));
    record(c10_ablation(&desk_env, vq));
    record(c11_mulaw());
    record(c12_resume());

    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    let unexpected: Vec<u32> = failed
        .iter()
        .copied()
        .filter(|id| !KNOWN_UNATTAINABLE.contains(id))
        .collect();
    let summary = format!(
        "acceptance: {}/{} PASS; failing {:?} (known unattainable: {:?})\n",
        outcomes.len() - failed.len(),
        outcomes.len(),
        failed,
        KNOWN_UNATTAINABLE
    );
    let _ = std::io::stderr().write_all(summary.as_bytes());
    assert_eq!(outcomes.len(), 12);
    assert!(unexpected.is_empty(), "acceptance criteria failed: {unexpected:?}");
}

#[test]
#[ignore = "unattainable with 8-bit mu-law at mu = 255; run with --include-ignored to see it fail"]
fn criterion_11_strict() {
    let o = c11_mulaw();
    report(&o);
    assert!(o.passed, "{}", o.detail);
}
