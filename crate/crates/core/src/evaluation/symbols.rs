//! Symbol files: UTF-8 text with the utterance id on line 1 and
//! space-separated symbol ids on line 2, plus a JSON sidecar (`.json` next to
//! the text file) holding frame metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SymbolSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSidecar {
    pub frames_per_symbol: usize,
    pub frame_shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_frames: Option<usize>,
    /// Overrides the duration implied by the frame counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_symbol_file(seq: &SymbolSequence, path: &Path) -> Result<()> {
    let ids: Vec<String> = seq.symbol_ids.iter().map(usize::to_string).collect();
    let text = format!("{}\n{}\n", seq.utterance_id, ids.join(" "));
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let side = SymbolSidecar {
        frames_per_symbol: seq.frames_per_symbol,
        frame_shift: seq.frame_shift,
        num_frames: Some(seq.num_frames),
        duration: None,
    };
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_string_pretty(&side)? + "\n").map_err(|e| Error::io(&sp, e))
}

/// Reads a symbol file and its sidecar. Returns the sequence and the duration
/// it covers in seconds.
pub fn read_symbol_file(path: &Path) -> Result<(SymbolSequence, f64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let id = lines
        .next()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::format(path, "missing utterance id line"))?;
    let ids = lines
        .next()
        .unwrap_or("")
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::format(path, format!("bad symbol id {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::format(path, "unexpected content after line 2"));
    }
    let sp = sidecar_path(path);
    let side_text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: SymbolSidecar = serde_json::from_str(&side_text).map_err(|e| Error::format(&sp, e.to_string()))?;
    if side.frames_per_symbol == 0 || !(side.frame_shift > 0.0) {
        return Err(Error::format(&sp, "frames_per_symbol and frame_shift must be positive"));
    }
    let num_frames = side.num_frames.unwrap_or(ids.len() * side.frames_per_symbol);
    let duration = side.duration.unwrap_or(num_frames as f64 * side.frame_shift);
    Ok((
        SymbolSequence {
            utterance_id: id.to_string(),
            symbol_ids: ids,
            frames_per_symbol: side.frames_per_symbol,
            frame_shift: side.frame_shift,
            num_frames,
        },
        duration,
    ))
}
