//! `ZSFEAT1` feature files: the magic bytes, `u32` frame count, `u32`
//! dimension, `f32` frame shift in seconds, then `T * d` row-major `f32`
//! values. Everything little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{FeatureKind, FeatureSequence};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 7] = b"ZSFEAT1";

pub fn write_features(path: impl AsRef<Path>, feats: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(19 + 4 * feats.frames().len());
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.write_u32::<LittleEndian>(feats.num_frames() as u32).unwrap();
    buf.write_u32::<LittleEndian>(feats.dim() as u32).unwrap();
    buf.write_f32::<LittleEndian>(feats.frame_shift as f32).unwrap();
    for &v in feats.frames() {
        buf.write_f32::<LittleEndian>(v).unwrap();
    }
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(&buf)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let bad = |msg: &str| Error::format(path, msg.to_string());
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| bad("file too short for ZSFEAT1 header"))?;
    if &magic != FEATURE_MAGIC {
        return Err(bad("missing ZSFEAT1 magic"));
    }
    let t = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
    let d = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
    let shift = r.read_f32::<LittleEndian>().map_err(|_| bad("truncated header"))?;
    if d == 0 {
        return Err(bad("feature dimension is zero"));
    }
    let mut data = vec![0f32; t * d];
    r.read_f32_into::<LittleEndian>(&mut data)
        .map_err(|_| bad(&format!("expected {t} x {d} values, file is truncated")))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(bad("trailing bytes after feature payload"));
    }
    let mut feats = FeatureSequence::new(FeatureKind::from_dim(d), data, t, f64::from(shift))?;
    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
        feats.utterance_id = stem.to_string();
    }
    Ok(feats)
}
