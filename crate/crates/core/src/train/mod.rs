//! Alternating end-to-end training of both stages, checkpointing and
//! inference.

mod checkpoint;
mod config;
mod model;
mod step;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{
    checkpoint_name, latest_checkpoint, load_checkpoint, save_checkpoint, LoopState, Restored,
};
pub use config::{LabelRouting, TrainConfig};
pub use model::{Batch, Generated, Model};
pub use step::train_step;

use crate::data::{make_training_pairs, Dataset, Image, TrainingPair};
use crate::error::{Error, Result};
use crate::identity::IdentityEmbedder;
use crate::losses::LossReport;

/// Offset of the pair-shuffling stream relative to the run seed.
const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// Drives training over a dataset: shuffles pairs per epoch, batches them,
/// runs [`train_step`], logs reports and writes checkpoints.
pub struct Trainer<'a> {
    model: Model,
    pairs: Vec<TrainingPair>,
    loop_state: LoopState,
    embedder: Option<&'a IdentityEmbedder>,
    embedder_hash: Option<String>,
    log: Option<(PathBuf, BufWriter<File>)>,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &Dataset, cfg: TrainConfig, embedder: Option<&'a IdentityEmbedder>) -> Result<Self> {
        let model = Model::new(cfg.clone(), dataset.vocabulary.clone(), dataset.intensity_levels)?;
        let shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
        let loop_state = LoopState {
            epoch: 0,
            cursor: 0,
            order: Vec::new(),
            shuffle_rng,
        };
        Self::assemble(model, loop_state, dataset, embedder)
    }

    /// Continue from a checkpoint written by [`Trainer::save_checkpoint`].
    pub fn resume(dir: &Path, dataset: &Dataset, embedder: Option<&'a IdentityEmbedder>) -> Result<Self> {
        let restored = load_checkpoint(dir)?;
        let loop_state = restored
            .loop_state
            .ok_or_else(|| Error::Checkpoint(format!("{} has no loop state", dir.display())))?;
        if let (Some(recorded), Some(e)) = (&restored.embedder_hash, embedder) {
            if *recorded != e.parameter_hash()? {
                return Err(Error::Checkpoint(
                    "identity embedder differs from the one used for this run".into(),
                ));
            }
        }
        Self::assemble(restored.model, loop_state, dataset, embedder)
    }

    fn assemble(
        model: Model,
        loop_state: LoopState,
        dataset: &Dataset,
        embedder: Option<&'a IdentityEmbedder>,
    ) -> Result<Self> {
        let cfg = model.config();
        if dataset.is_empty() {
            return Err(Error::invalid("training dataset is empty"));
        }
        if dataset.resolution != cfg.resolution {
            return Err(Error::invalid(format!(
                "dataset resolution {} differs from config resolution {}",
                dataset.resolution, cfg.resolution
            )));
        }
        if cfg.intensity_conditioning != model.intensity_levels().is_some() {
            return Err(Error::invalid(
                "intensity conditioning mismatch between model and dataset",
            ));
        }
        let embedder = if cfg.use_identity_loss {
            let e = embedder.ok_or_else(|| {
                Error::invalid("use_identity_loss is set but no identity embedder was given")
            })?;
            if !e.is_frozen() {
                return Err(Error::NotFrozen);
            }
            Some(e)
        } else {
            None
        };
        let embedder_hash = embedder.map(|e| e.parameter_hash()).transpose()?;
        let mut pair_source = dataset.clone();
        if !cfg.intensity_conditioning {
            pair_source.intensity_levels = None;
        }
        let pairs = make_training_pairs(&pair_source, cfg.pairing)?.pairs;
        if pairs.is_empty() {
            return Err(Error::invalid("dataset yields no training pairs"));
        }
        if !loop_state.order.is_empty() && loop_state.order.len() != pairs.len() {
            return Err(Error::Checkpoint(
                "checkpoint was written for a different dataset".into(),
            ));
        }
        Ok(Self {
            model,
            pairs,
            loop_state,
            embedder,
            embedder_hash,
            log: None,
        })
    }

    /// Append every report as one JSON line to `path`.
    pub fn log_to(&mut self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        self.log = Some((path.to_path_buf(), BufWriter::new(file)));
        Ok(())
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn pairs(&self) -> &[TrainingPair] {
        &self.pairs
    }

    pub fn step_count(&self) -> u64 {
        self.model.step_count()
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.pairs.len().div_ceil(self.model.config().batch_size) as u64
    }

    /// Total steps of the run: `epochs` passes, capped by `max_steps`.
    pub fn total_steps(&self) -> u64 {
        let cfg = self.model.config();
        let by_epochs = cfg.epochs as u64 * self.steps_per_epoch();
        cfg.max_steps.map_or(by_epochs, |m| m.min(by_epochs))
    }

    pub fn is_finished(&self) -> bool {
        self.step_count() >= self.total_steps()
    }

    fn next_batch(&mut self) -> Result<Batch> {
        let ls = &mut self.loop_state;
        if ls.order.is_empty() || ls.cursor >= ls.order.len() {
            if !ls.order.is_empty() {
                ls.epoch += 1;
            }
            ls.order = (0..self.pairs.len()).collect();
            ls.order.shuffle(&mut ls.shuffle_rng);
            ls.cursor = 0;
        }
        let end = (ls.cursor + self.model.config().batch_size).min(ls.order.len());
        let chosen: Vec<&TrainingPair> = ls.order[ls.cursor..end].iter().map(|&i| &self.pairs[i]).collect();
        ls.cursor = end;
        Batch::new(&chosen, &Device::Cpu, DType::F32)
    }

    /// Run one training step on the next batch.
    pub fn step(&mut self) -> Result<LossReport> {
        let batch = self.next_batch()?;
        let report = train_step(&mut self.model, &batch, self.embedder)?;
        if let Some((path, log)) = self.log.as_mut() {
            serde_json::to_writer(&mut *log, &report)?;
            log.write_all(b"\n").map_err(|e| Error::io(&*path, e))?;
            log.flush().map_err(|e| Error::io(&*path, e))?;
        }
        Ok(report)
    }

    /// Run `n` steps (fewer if the run finishes first).
    pub fn run(&mut self, n: u64) -> Result<Vec<LossReport>> {
        let mut out = Vec::new();
        for _ in 0..n {
            if self.is_finished() {
                break;
            }
            out.push(self.step()?);
        }
        Ok(out)
    }

    pub fn save_checkpoint(&self, root: &Path) -> Result<PathBuf> {
        save_checkpoint(
            &self.model,
            root,
            Some(&self.loop_state),
            self.embedder_hash.clone(),
        )
    }
}

/// Result of a full training run.
pub struct TrainOutcome {
    pub model: Model,
    pub reports: Vec<LossReport>,
    pub checkpoints: Vec<PathBuf>,
}

/// Train to completion. With `out_dir`, reports go to `losses.jsonl` and
/// checkpoints to `checkpoints/` every `checkpoint_every` steps and at the
/// end.
pub fn train(
    dataset: &Dataset,
    cfg: TrainConfig,
    embedder: Option<&IdentityEmbedder>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    run_to_completion(Trainer::new(dataset, cfg, embedder)?, out_dir)
}

/// Continue the latest checkpoint under `out_dir/checkpoints` to completion.
pub fn resume_training(
    dataset: &Dataset,
    embedder: Option<&IdentityEmbedder>,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let latest = latest_checkpoint(&out_dir.join("checkpoints"))?
        .ok_or_else(|| Error::Checkpoint(format!("no checkpoint under {}", out_dir.display())))?;
    run_to_completion(Trainer::resume(&latest, dataset, embedder)?, Some(out_dir))
}

fn run_to_completion(mut trainer: Trainer, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let ckpt_root = out_dir.map(|d| d.join("checkpoints"));
    if let Some(dir) = out_dir {
        trainer.log_to(&dir.join("losses.jsonl"))?;
    }
    let every = trainer.model().config().checkpoint_every;
    let total = trainer.total_steps();
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    while !trainer.is_finished() {
        let report = trainer.step()?;
        let step = report.step;
        if step % 50 == 0 || step == total {
            log::info!(
                "step {step}/{total}: stage1 {:.4} stage2 {:.4} d_l {:.4} d_e {:.4}",
                report.stage1_total,
                report.stage2_total,
                report.d_l,
                report.d_e
            );
        }
        reports.push(report);
        if let Some(root) = &ckpt_root {
            if (every > 0 && step % every == 0) || step == total {
                checkpoints.push(trainer.save_checkpoint(root)?);
            }
        }
    }
    Ok(TrainOutcome {
        model: trainer.into_model(),
        reports,
        checkpoints,
    })
}

/// Load a checkpoint and generate one face for `expression`.
pub fn generate(
    checkpoint: &Path,
    image: &Image,
    expression: &str,
    intensity: Option<u8>,
) -> Result<Generated> {
    let model = load_checkpoint(checkpoint)?.model;
    let deterministic = model.config().eval_deterministic;
    let mut rng = ChaCha8Rng::seed_from_u64(model.config().seed);
    model.generate(image, expression, intensity, deterministic, &mut rng)
}
