//! `ZSCKPT1` checkpoint files, all integers and floats little-endian:
//!
//! ```text
//! magic "ZSCKPT1" | u32 version | u32 len + config JSON
//! u32 count, then per parameter: u32 len + name | u32 ndim | ndim x u32 | f32 data
//! optimizer: u64 step | f64 lr, beta1, beta2, eps | per parameter f32 m, f32 v
//! rng: u64 seed | u32 len + algorithm | u64 training step
//! normalization: u32 dim | dim x f32 mean | dim x f32 std
//! speakers: u32 count, then u32 len + name each
//! batch norm: u32 count, then per layer u32 len + name | u32 ch | ch x f32 mean | ch x f32 var
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::codec::CodecModel;
use super::data::FeatureNorm;
use super::network::Buffers;
use super::CodecConfig;
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, AdamState, BatchNormStats, ParamStore, RngState, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"ZSCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn put_f32s(w: &mut impl Write, v: &[f32]) -> std::io::Result<()> {
    v.iter().try_for_each(|&x| w.write_f32::<LE>(x))
}

fn write_body(w: &mut impl Write, m: &CodecModel) -> Result<()> {
    let io = |e| Error::io("<checkpoint>", e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_u32::<LE>(CHECKPOINT_VERSION).map_err(io)?;
    put_str(w, &serde_json::to_string(&m.config)?).map_err(io)?;

    w.write_u32::<LE>(m.params.len() as u32).map_err(io)?;
    for p in m.params.iter() {
        put_str(w, &p.name).map_err(io)?;
        w.write_u32::<LE>(p.value.ndim() as u32).map_err(io)?;
        for &d in p.value.shape() {
            w.write_u32::<LE>(d as u32).map_err(io)?;
        }
        put_f32s(w, p.value.data()).map_err(io)?;
    }

    let opt = &m.optimizer;
    w.write_u64::<LE>(opt.state.step).map_err(io)?;
    for v in [opt.config.lr, opt.config.beta1, opt.config.beta2, opt.config.eps] {
        w.write_f64::<LE>(v).map_err(io)?;
    }
    for (mv, vv) in opt.state.m.iter().zip(&opt.state.v) {
        put_f32s(w, mv).map_err(io)?;
        put_f32s(w, vv).map_err(io)?;
    }

    w.write_u64::<LE>(m.rng.seed).map_err(io)?;
    put_str(w, &m.rng.algorithm).map_err(io)?;
    w.write_u64::<LE>(m.step).map_err(io)?;

    w.write_u32::<LE>(m.norm.mean.len() as u32).map_err(io)?;
    put_f32s(w, &m.norm.mean).map_err(io)?;
    put_f32s(w, &m.norm.std).map_err(io)?;

    w.write_u32::<LE>(m.speakers.len() as u32).map_err(io)?;
    for s in &m.speakers {
        put_str(w, s).map_err(io)?;
    }

    w.write_u32::<LE>(m.buffers.len() as u32).map_err(io)?;
    for (name, b) in &m.buffers {
        put_str(w, name).map_err(io)?;
        w.write_u32::<LE>(b.mean.len() as u32).map_err(io)?;
        put_f32s(w, &b.mean).map_err(io)?;
        put_f32s(w, &b.var).map_err(io)?;
    }
    Ok(())
}

/// Writes to a temporary sibling and renames, so a crash never leaves a
/// truncated checkpoint under the final name.
pub fn save_checkpoint(model: &CodecModel, path: &Path) -> Result<()> {
    let tmp = path.with_extension("partial");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    write_body(&mut w, model).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(&tmp, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a, R> {
    r: R,
    path: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn fail(&self, what: &str) -> Error {
        Error::format(self.path, format!("truncated or corrupt checkpoint ({what})"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.r.read_u32::<LE>().map_err(|_| self.fail(what))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.r.read_u64::<LE>().map_err(|_| self.fail(what))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.r.read_f64::<LE>().map_err(|_| self.fail(what))
    }

    fn len(&mut self, what: &str, limit: usize) -> Result<usize> {
        let n = self.u32(what)? as usize;
        if n > limit {
            return Err(Error::format(self.path, format!("{what}: implausible length {n}")));
        }
        Ok(n)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.len(what, 1 << 24)?;
        let mut buf = vec![0u8; n];
        self.r.read_exact(&mut buf).map_err(|_| self.fail(what))?;
        String::from_utf8(buf).map_err(|_| Error::format(self.path, format!("{what} is not UTF-8")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let mut v = vec![0f32; n];
        self.r.read_f32_into::<LE>(&mut v).map_err(|_| self.fail(what))?;
        Ok(v)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<CodecModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = Reader {
        r: BufReader::new(file),
        path,
    };
    let mut magic = [0u8; 7];
    rd.r.read_exact(&mut magic).map_err(|_| rd.fail("magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "not a ZSCKPT1 checkpoint"));
    }
    let version = rd.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let config: CodecConfig =
        serde_json::from_str(&rd.string("config")?).map_err(|e| Error::format(path, format!("config: {e}")))?;
    config.validate().map_err(|e| Error::format(path, e.to_string()))?;

    let mut params = ParamStore::new();
    let count = rd.len("parameter count", 1 << 16)?;
    for _ in 0..count {
        let name = rd.string("parameter name")?;
        let ndim = rd.len("rank", 8)?;
        let shape = (0..ndim)
            .map(|_| rd.u32("dims").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        if numel > 1 << 30 {
            return Err(Error::format(path, format!("{name}: implausible shape {shape:?}")));
        }
        let data = rd.f32s(numel, &name)?;
        params
            .insert(name, Tensor::new(shape, data)?)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }

    let opt_step = rd.u64("optimizer step")?;
    let mut hp = [0f64; 4];
    for v in &mut hp {
        *v = rd.f64("optimizer config")?;
    }
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for p in params.iter() {
        m.push(rd.f32s(p.value.numel(), "adam m")?);
        v.push(rd.f32s(p.value.numel(), "adam v")?);
    }
    let optimizer = Adam {
        config: AdamConfig {
            lr: hp[0],
            beta1: hp[1],
            beta2: hp[2],
            eps: hp[3],
        },
        state: AdamState { step: opt_step, m, v },
    };

    let seed = rd.u64("rng seed")?;
    let algorithm = rd.string("rng algorithm")?;
    if algorithm != RngState::new(0).algorithm {
        return Err(Error::format(path, format!("unsupported rng algorithm {algorithm:?}")));
    }
    let step = rd.u64("step")?;

    let dim = rd.len("normalization dim", 4096)?;
    let norm = FeatureNorm {
        mean: rd.f32s(dim, "normalization mean")?,
        std: rd.f32s(dim, "normalization std")?,
    };

    let ns = rd.len("speaker count", 1 << 20)?;
    let speakers = (0..ns).map(|_| rd.string("speaker")).collect::<Result<Vec<_>>>()?;

    let nb = rd.len("batch-norm count", 1 << 16)?;
    let mut buffers = Buffers::new();
    for _ in 0..nb {
        let name = rd.string("batch-norm name")?;
        let ch = rd.len("batch-norm channels", 1 << 20)?;
        let mut stats = BatchNormStats::new(ch);
        stats.mean = rd.f32s(ch, &name)?;
        stats.var = rd.f32s(ch, &name)?;
        buffers.insert(name, stats);
    }
    let mut rest = [0u8; 1];
    if rd.r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after checkpoint"));
    }

    // Structure must match what this config builds.
    let fresh = CodecModel::new(config.clone(), speakers.clone(), FeatureNorm::identity(super::MFCC_DIM))
        .map_err(|e| Error::format(path, e.to_string()))?;
    let same_params = fresh.params.len() == params.len()
        && fresh
            .params
            .iter()
            .all(|p| params.get(&p.name).is_some_and(|q| q.value.shape() == p.value.shape()));
    let same_buffers = fresh.buffers.len() == buffers.len()
        && fresh
            .buffers
            .iter()
            .all(|(k, b)| buffers.get(k).is_some_and(|c| c.mean.len() == b.mean.len()));
    if !same_params || !same_buffers || norm.mean.len() != super::MFCC_DIM {
        return Err(Error::format(path, "checkpoint tensors do not match its config"));
    }
    Ok(CodecModel {
        config,
        params,
        buffers,
        speakers,
        norm,
        optimizer,
        rng: RngState { seed, algorithm },
        step,
    })
}
