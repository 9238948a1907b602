use std::path::{Path, PathBuf};

use super::checkpoint::save_checkpoint;
use super::codec::{CodecModel, LossReport, STREAM_DATA};
use super::data::Corpus;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct TrainingRun {
    /// One report per step taken in this call.
    pub losses: Vec<LossReport>,
    pub checkpoints: Vec<PathBuf>,
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step{step:08}.zsckpt"))
}

/// Trains from `model.step` up to `until` steps. Batch `s` is drawn from the
/// rng stream of step `s`, so stopping, saving and resuming reproduces the
/// uninterrupted run exactly. Checkpoints go to `checkpoint_dir` every
/// `checkpoint_every` steps and at the end.
pub fn run_training(
    model: &mut CodecModel,
    corpus: &Corpus,
    checkpoint_dir: Option<&Path>,
    until: u64,
    mut on_step: impl FnMut(u64, &LossReport),
) -> Result<TrainingRun> {
    if model.config.speaker_embed_dim > 0 {
        for s in corpus.speakers() {
            model.speaker_index(&s)?;
        }
    }
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let crop = model.config.training.crop_frames;
    let batch_size = model.config.training.batch_size;
    let every = model.config.training.checkpoint_every;
    let mut run = TrainingRun::default();
    while model.step < until {
        let mut rng = model.rng.stream(model.step, STREAM_DATA);
        let m = &*model;
        let batch = corpus.sample_batch(&m.norm, crop, batch_size, |s| m.speaker_index(s).or(Ok(0)), &mut rng)?;
        let report = model.train_step(&batch)?;
        on_step(model.step - 1, &report);
        if model.step.is_multiple_of(100) {
            log::info!(
                "step {} recon {:.4} aux {:.4} tau {:.3}",
                model.step,
                report.recon,
                report.aux,
                model.tau()
            );
        }
        run.losses.push(report);
        if let Some(dir) = checkpoint_dir {
            if (every > 0 && model.step.is_multiple_of(every)) || model.step == until {
                let p = checkpoint_path(dir, model.step);
                save_checkpoint(model, &p)?;
                run.checkpoints.push(p);
            }
        }
    }
    Ok(run)
}
