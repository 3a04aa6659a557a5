//! `keydet train`: optimizes a detector on a patch archive, writing a
//! checkpoint, an optional JSONL step log, and — when the loss goes
//! non-finite — a last-good checkpoint next to the requested output so no
//! compute is lost to a numeric blowup.

use std::path::{Path, PathBuf};

use clap::Args;
use keydet_core::trainer::{train, StepRecord, TrainObserver, TrainState};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{checkpoint, trainlog::JsonlLogger};
use crate::parallel::{resolve_threads, PoolMapper};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Patch archive to train on.
    #[arg(long)]
    pub archive: PathBuf,
    /// Checkpoint file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Base configuration file (TOML); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Resume from an existing checkpoint instead of initializing fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// JSONL step log to write.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Objective variant.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Tuples per optimizer step.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Tuples per parallel work item (determinism-relevant).
    #[arg(long)]
    pub chunk: Option<usize>,
    /// Weight-init and shuffle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Triplet coefficient alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Triplet coefficient beta.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight of the identity anchor term (baseline variants).
    #[arg(long)]
    pub identity_weight: Option<f64>,
    /// First epoch at which the affine term contributes.
    #[arg(long)]
    pub affine_epoch: Option<usize>,
    /// Gradient-norm clip (0 disables).
    #[arg(long)]
    pub clip: Option<f64>,
    /// Worker threads (default: KEYDET_THREADS or all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Epochs between intermediate checkpoint saves (0 disables).
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
}

fn apply_overrides(run: &mut RunConfig, args: &TrainArgs) {
    if let Some(v) = &args.loss {
        run.loss.variant = v.clone();
    }
    if let Some(v) = args.epochs {
        run.training.epochs = v;
    }
    if let Some(v) = args.batch {
        run.training.batch_size = v;
    }
    if let Some(v) = args.chunk {
        run.training.chunk_size = v;
    }
    if let Some(v) = args.seed {
        run.training.seed = v;
    }
    if let Some(v) = args.alpha {
        run.loss.alpha = v;
    }
    if let Some(v) = args.beta {
        run.loss.beta = v;
    }
    if let Some(v) = args.identity_weight {
        run.loss.identity_weight = v;
    }
    if let Some(v) = args.affine_epoch {
        run.loss.affine_enabled_epoch = v;
    }
    if let Some(v) = args.clip {
        run.training.grad_clip_norm = v;
    }
    if let Some(v) = args.checkpoint_interval {
        run.training.checkpoint_interval = v;
    }
}

/// Where the last-good state goes when training aborts on a non-finite
/// loss: `model.kdck` becomes `model.lastgood.kdck`.
fn lastgood_path(out: &Path) -> PathBuf {
    match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => out.with_extension(format!("lastgood.{ext}")),
        None => out.with_extension("lastgood"),
    }
}

/// Observer stack: step logging plus interval checkpointing. Observer
/// callbacks are infallible by design, so failures are stored and
/// surfaced after the training loop returns.
struct TrainHooks<'a> {
    logger: Option<JsonlLogger>,
    out: &'a Path,
    config_hash: &'a str,
    deferred: Option<CliError>,
}

impl TrainObserver<f32> for TrainHooks<'_> {
    fn on_step(&mut self, record: &StepRecord) {
        if let Some(logger) = &mut self.logger {
            logger.on_step(record);
        }
    }

    fn on_epoch_end(&mut self, state: &TrainState<f32>) {
        let e = state.epoch();
        let loss = state.last_loss.unwrap_or(f64::NAN);
        eprintln!("epoch {e}: mean total loss {loss:.4}");
    }

    fn on_checkpoint(&mut self, state: &TrainState<f32>) {
        if self.deferred.is_some() {
            return;
        }
        if let Err(e) = checkpoint::save(self.out, state, self.config_hash) {
            self.deferred = Some(e);
        }
    }
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut run = RunConfig::load_or_default(args.config.as_deref())?;
    apply_overrides(&mut run, args);
    let hash = run.hash();
    let config = run.train_config()?;

    let (tuples, archive_hash) = crate::formats::archive::load(&args.archive)?;
    let mut state = match &args.resume {
        Some(path) => {
            let (state, _) = checkpoint::load(path)?;
            config
                .compatible_with(&state.config)
                .map_err(super::train_error)?;
            state
        }
        None => TrainState::new(config).map_err(super::train_error)?,
    };

    let threads = resolve_threads(args.threads)?;
    let mapper = PoolMapper::new(threads)?;
    let logger = match &args.log {
        Some(path) => Some(JsonlLogger::create(path)?),
        None => None,
    };
    let mut hooks = TrainHooks {
        logger,
        out: &args.out,
        config_hash: &hash,
        deferred: None,
    };

    let outcome = train(&mut state, tuples.as_slice(), &config, &mapper, &mut hooks);
    let TrainHooks {
        logger, deferred, ..
    } = hooks;
    if let Some(logger) = logger {
        logger.finish()?;
    }
    if let Some(e) = deferred {
        return Err(e);
    }

    match outcome {
        Ok(()) => {
            checkpoint::save(&args.out, &state, &hash)?;
            println!(
                "trained {} epochs on {} tuples (archive sha256:{archive_hash}); \
                 checkpoint {} (config sha256:{hash})",
                state.epoch(),
                tuples.len(),
                args.out.display()
            );
            Ok(())
        }
        Err(err @ keydet_core::trainer::TrainError::NonFinite { .. }) => {
            // The state still holds the last parameters that produced a
            // finite loss; preserve them for inspection or a re-run with a
            // tighter clip.
            let rescue = lastgood_path(&args.out);
            checkpoint::save(&rescue, &state, &hash)?;
            Err(CliError::Numeric(format!(
                "{err}; last-good state saved to {}",
                rescue.display()
            )))
        }
        Err(err) => Err(super::train_error(err)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lastgood_path_keeps_extension() {
        assert_eq!(
            lastgood_path(Path::new("runs/model.kdck")),
            Path::new("runs/model.lastgood.kdck")
        );
        assert_eq!(
            lastgood_path(Path::new("model")),
            Path::new("model.lastgood")
        );
    }
}
