//! ABX discriminability over DTW-aligned cosine distances, and the bitrate
//! of symbol streams.

mod abx;
mod bitrate;
mod dtw;
mod report;
mod symbols;

pub use abx::{
    abx_error_rate, abx_evaluate, read_abx_task, score_triple, write_abx_task, AbxResult, AbxTask, AbxTriple,
    SegmentRef,
};
pub use bitrate::{bitrate, codebook_utilization, entropy_bits, SymbolStream};
pub use dtw::{cosine_distance, dtw_cosine};
pub use report::{eval_report, latent_frames, model_representations, EvalReport, ModelRepresentations};
pub use symbols::{read_symbol_file, sidecar_path, write_symbol_file, SymbolSidecar};
