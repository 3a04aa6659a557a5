//! The training loop: deterministic batching, the staged loss schedule,
//! optimizer stepping, and per-step metric records.
//!
//! Determinism is the central contract here. Given a seed and a tuple
//! source, two runs must produce bit-identical weights, and a run resumed
//! from an epoch-boundary checkpoint must be step-identical to an
//! uninterrupted one. Three mechanisms carry that guarantee:
//!
//! * the per-epoch shuffle is drawn from a counter-based stream keyed on
//!   `(seed, epoch)`, so epoch `e` shuffles the same way no matter how the
//!   process got there;
//! * each batch is split into fixed-size chunks of tuples, chunks may be
//!   evaluated on any thread in any order, and their gradients are then
//!   summed *in chunk order* followed by a single division by the batch
//!   size — the floating-point reduction tree never depends on thread
//!   scheduling;
//! * the learning rate is recomputed from the epoch index as an exact
//!   power, never accumulated multiplicatively.
//!
//! The affine covariance term is gated by epoch: for the first
//! `affine_enabled_epoch` epochs only the translation objective trains, and
//! the affine component of every logged record is exactly zero. Training
//! with large coefficient magnitudes is known to blow up; a finiteness
//! guard aborts the run before a poisoned update is applied, so the state
//! held by the caller is always the last good one.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::dataset::{PatchTuple, TupleGenerator};
use crate::losses::{loss_total, LossComponents, LossConfig, TupleOutputs, TupleTargets};
use crate::nn::{FeatureMaps, NetGrads, Network, NnError, OptimizerConfig, SgdMomentum, PATCH_SIZE};
use crate::parallel::ChunkMapper;
use crate::real::Real;
use crate::rng::{stream_rng, STREAM_SHUFFLE};

/// Everything that shapes a training run.
///
/// All fields except `epochs` and `checkpoint_interval` affect the bit
/// pattern of the learned weights, so a resumed run must match them
/// exactly; see [`TrainConfig::compatible_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Total epochs to train (a resume continues up to this count).
    pub epochs: usize,
    /// Tuples per optimizer step; the trailing `count % batch_size` tuples
    /// of each shuffled epoch are dropped.
    pub batch_size: usize,
    /// Tuples per parallel work item. Chunk boundaries shape the gradient
    /// reduction tree, so this is a determinism-relevant parameter, not
    /// just a throughput knob.
    pub chunk_size: usize,
    pub loss: LossConfig,
    pub opt: OptimizerConfig,
    /// Master seed: drives weight initialization and the epoch shuffles
    /// (tuple synthesis is seeded by the dataset, not here).
    pub seed: u64,
    /// Upper bound on the L2 norm of the batch-mean gradient; larger
    /// gradients are rescaled to this norm before the optimizer sees them.
    /// 0 disables clipping.
    ///
    /// The covariance objectives are measured in pixels, so a fresh network
    /// produces residuals of tens of pixels and gradients far too steep for
    /// the configured learning rate — the instability from high gradient
    /// flows that motivated the small triplet coefficients in the first
    /// place. Unclipped, the loss reaches NaN within a handful of steps at
    /// every batch size; rescaling the gradient direction keeps the
    /// published schedule intact while bounding each update.
    pub grad_clip_norm: f64,
    /// Epochs between intermediate checkpoint callbacks; 0 disables them
    /// (the final state is always available to the caller).
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 128,
            chunk_size: 8,
            loss: LossConfig::default(),
            opt: OptimizerConfig::default(),
            seed: 0,
            grad_clip_norm: 3.0,
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config(String::from("batch_size must be >= 1")));
        }
        if self.chunk_size == 0 {
            return Err(TrainError::Config(String::from("chunk_size must be >= 1")));
        }
        self.loss.validate().map_err(TrainError::Config)?;
        if !(self.grad_clip_norm.is_finite() && self.grad_clip_norm >= 0.0) {
            return Err(TrainError::Config(format!(
                "grad_clip_norm must be finite and >= 0 (0 disables), got {}",
                self.grad_clip_norm
            )));
        }
        if !(self.opt.lr0.is_finite() && self.opt.momentum.is_finite() && self.opt.decay.is_finite())
        {
            return Err(TrainError::Config(format!(
                "optimizer settings must be finite, got lr0 {} momentum {} decay {}",
                self.opt.lr0, self.opt.momentum, self.opt.decay
            )));
        }
        Ok(())
    }

    /// Checks that continuing a run saved under `saved` with `self` cannot
    /// change its numerical trajectory. `epochs` and `checkpoint_interval`
    /// are exempt: extending a run or re-timing snapshots is safe.
    pub fn compatible_with(&self, saved: &TrainConfig) -> Result<(), TrainError> {
        let mut bad: Vec<String> = Vec::new();
        if self.batch_size != saved.batch_size {
            bad.push(format!(
                "batch_size {} != saved {}",
                self.batch_size, saved.batch_size
            ));
        }
        if self.chunk_size != saved.chunk_size {
            bad.push(format!(
                "chunk_size {} != saved {}",
                self.chunk_size, saved.chunk_size
            ));
        }
        if self.seed != saved.seed {
            bad.push(format!("seed {} != saved {}", self.seed, saved.seed));
        }
        if self.grad_clip_norm != saved.grad_clip_norm {
            bad.push(format!(
                "grad_clip_norm {} != saved {}",
                self.grad_clip_norm, saved.grad_clip_norm
            ));
        }
        if self.loss != saved.loss {
            bad.push(format!("loss config {:?} != saved {:?}", self.loss, saved.loss));
        }
        if self.opt != saved.opt {
            bad.push(format!(
                "optimizer config {:?} != saved {:?}",
                self.opt, saved.opt
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(TrainError::Incompatible(bad.join("; ")))
        }
    }
}

/// Training failures.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    /// The configuration is invalid on its own.
    Config(String),
    /// The configuration conflicts with the one a checkpoint was saved under.
    Incompatible(String),
    /// The loss or gradient went NaN/infinite. The caller's state still
    /// holds the last good parameters — no update was applied this step.
    NonFinite {
        epoch: usize,
        step: usize,
        detail: String,
    },
    /// A forward/backward pass rejected its input.
    Net(NnError),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Config(s) => write!(f, "invalid training config: {s}"),
            TrainError::Incompatible(s) => {
                write!(f, "config incompatible with checkpoint: {s}")
            }
            TrainError::NonFinite {
                epoch,
                step,
                detail,
            } => write!(
                f,
                "non-finite loss at epoch {epoch} step {step} ({detail}); \
                 aborted before applying the update"
            ),
            TrainError::Net(e) => write!(f, "network error: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        TrainError::Net(e)
    }
}

/// Supplies training tuples by index. Implementations must be pure in the
/// index — the shuffle decides ordering, the source only materializes.
pub trait TupleSource<T: Real>: Sync {
    fn len(&self) -> u64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tuple(&self, index: u64) -> PatchTuple<T>;
}

impl<T: Real> TupleSource<T> for TupleGenerator<'_, T> {
    fn len(&self) -> u64 {
        TupleGenerator::len(self)
    }

    fn tuple(&self, index: u64) -> PatchTuple<T> {
        self.tuple_at(index)
    }
}

/// In-memory tuple collections (e.g. a decoded archive) are sources too.
impl<T: Real> TupleSource<T> for [PatchTuple<T>] {
    fn len(&self) -> u64 {
        self.as_ref().len() as u64
    }

    fn tuple(&self, index: u64) -> PatchTuple<T> {
        self[index as usize].clone()
    }
}

/// One optimizer step's metrics. Component values are batch means; inactive
/// components are exactly zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    /// Step index within the epoch.
    pub step: usize,
    pub lr: f64,
    /// Mean total loss over the batch.
    pub total: f64,
    pub components: LossComponents,
    /// L2 norm of the batch-mean gradient before clipping.
    pub grad_norm: f64,
}

/// Observation hooks. All default to no-ops; implementations log, snapshot,
/// or collect as suits them. Hooks run on the training thread.
pub trait TrainObserver<T: Real> {
    fn on_step(&mut self, record: &StepRecord) {
        let _ = record;
    }

    /// Called after each epoch's final step and learning-rate decay.
    fn on_epoch_end(&mut self, state: &TrainState<T>) {
        let _ = state;
    }

    /// Called at `checkpoint_interval` boundaries (never for the final
    /// epoch — the caller holds the final state).
    fn on_checkpoint(&mut self, state: &TrainState<T>) {
        let _ = state;
    }
}

/// Observer that ignores everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullObserver;

impl<T: Real> TrainObserver<T> for NullObserver {}

/// The complete resumable state of a run: parameters, optimizer momentum
/// and epoch counter, the config the run was started under, and the most
/// recently observed mean batch loss (`None` before the first step).
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub net: Network<T>,
    pub opt: SgdMomentum<T>,
    pub config: TrainConfig,
    pub last_loss: Option<f64>,
}

impl<T: Real> TrainState<T> {
    /// Fresh state: seeded weight initialization, zero momentum, epoch 0.
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let net = Network::detector(config.seed);
        let opt = SgdMomentum::new(config.opt, &net);
        Ok(TrainState {
            net,
            opt,
            config,
            last_loss: None,
        })
    }

    /// Completed epochs (equivalently: the next epoch index to train).
    pub fn epoch(&self) -> usize {
        self.opt.epoch()
    }
}

/// Gradients and loss components summed over one chunk of tuples, before
/// the batch-mean division.
struct ChunkSums<T> {
    grads: NetGrads<T>,
    components: LossComponents,
}

/// Mean loss components and parameter gradients of `net` over `tuples` —
/// one batch evaluated out of band, exactly as a training step would (same
/// layout, same reduction), for gradient audits and diagnostics.
pub fn batch_loss_and_grads<T: Real>(
    net: &Network<T>,
    tuples: &[PatchTuple<T>],
    loss: &LossConfig,
    epoch: usize,
) -> Result<(LossComponents, NetGrads<T>), NnError> {
    let mut sums = process_chunk(net, tuples, loss, epoch)?;
    let scale = 1.0 / tuples.len() as f64;
    sums.components.scale(scale);
    sums.grads.scale(T::from_f64(scale));
    Ok((sums.components, sums.grads))
}

/// Forward + backward over one chunk. Patches enter the network as a single
/// batch, tuple-major and role-minor (x, x1, x2, x3, xa per tuple).
fn process_chunk<T: Real>(
    net: &Network<T>,
    tuples: &[PatchTuple<T>],
    loss: &LossConfig,
    epoch: usize,
) -> Result<ChunkSums<T>, NnError> {
    const ROLES: usize = 5;
    let n = tuples.len() * ROLES;
    let mut pixels = Vec::with_capacity(n * PATCH_SIZE * PATCH_SIZE);
    for tuple in tuples {
        for patch in [&tuple.x, &tuple.x1, &tuple.x2, &tuple.x3, &tuple.xa] {
            pixels.extend_from_slice(&patch.pixels);
        }
    }
    let input = FeatureMaps::from_data(1, n, PATCH_SIZE, PATCH_SIZE, pixels);
    let trace = net.forward_trace(input)?;
    let out = trace.output();
    debug_assert_eq!((out.channels, out.height, out.width), (2, 1, 1));

    let coord = |c: usize, slot: usize| out.data[c * n + slot];
    let mut dout = FeatureMaps::zeros(2, n, 1, 1);
    let mut components = LossComponents::default();
    for (j, tuple) in tuples.iter().enumerate() {
        let slot = |role: usize| j * ROLES + role;
        let outputs = TupleOutputs {
            x: [coord(0, slot(0)), coord(1, slot(0))],
            x1: [coord(0, slot(1)), coord(1, slot(1))],
            x2: [coord(0, slot(2)), coord(1, slot(2))],
            x3: [coord(0, slot(3)), coord(1, slot(3))],
            xa: [coord(0, slot(4)), coord(1, slot(4))],
        };
        let targets = TupleTargets::from_affine(tuple.t1, tuple.t2, tuple.t3, &tuple.a);
        let result = loss_total(&outputs, &targets, loss, epoch);
        components.add(&result.components);
        let g = &result.grads;
        for (role, d) in [g.x, g.x1, g.x2, g.x3, g.xa].into_iter().enumerate() {
            dout.data[slot(role)] = d[0];
            dout.data[n + slot(role)] = d[1];
        }
    }

    let mut grads = NetGrads::zeros_for(net);
    net.backward(&trace, dout, &mut grads, false);
    Ok(ChunkSums { grads, components })
}

/// Trains `state` in place up to `config.epochs`, starting from whatever
/// epoch the state has already completed. Returns `Ok` with the state
/// advanced; on any error the state is unchanged since the last completed
/// step, so it remains valid as a "last good" checkpoint.
pub fn train<T, S, M, O>(
    state: &mut TrainState<T>,
    source: &S,
    config: &TrainConfig,
    mapper: &M,
    observer: &mut O,
) -> Result<(), TrainError>
where
    T: Real,
    S: TupleSource<T> + ?Sized,
    M: ChunkMapper,
    O: TrainObserver<T>,
{
    config.validate()?;
    config.compatible_with(&state.config)?;
    state.config = *config;

    let count = source.len();
    if (config.batch_size as u64) > count {
        return Err(TrainError::Config(format!(
            "batch_size {} exceeds tuple count {}",
            config.batch_size, count
        )));
    }
    let steps_per_epoch = (count / config.batch_size as u64) as usize;

    for epoch in state.epoch()..config.epochs {
        let mut perm: Vec<u64> = (0..count).collect();
        perm.shuffle(&mut stream_rng(config.seed, STREAM_SHUFFLE, epoch as u64));

        for step in 0..steps_per_epoch {
            let batch = &perm[step * config.batch_size..(step + 1) * config.batch_size];
            let chunks: Vec<&[u64]> = batch.chunks(config.chunk_size).collect();

            let net = &state.net;
            let job = |c: usize| -> Result<ChunkSums<T>, NnError> {
                let tuples: Vec<PatchTuple<T>> =
                    chunks[c].iter().map(|&i| source.tuple(i)).collect();
                process_chunk(net, &tuples, &config.loss, epoch)
            };
            let results = mapper.map_chunks(chunks.len(), &job);

            // Ordered reduction: sum chunk results in chunk order, then one
            // division by the batch size. This is the only place the batch
            // mean is taken.
            let mut grads = NetGrads::zeros_for(&state.net);
            let mut components = LossComponents::default();
            for r in results {
                let sums = r?;
                grads.add_assign(&sums.grads);
                components.add(&sums.components);
            }
            let inv_b = 1.0 / config.batch_size as f64;
            grads.scale(T::from_f64(inv_b));
            components.scale(inv_b);
            let total = components.total();

            let grad_norm = grads.l2_norm();
            if !(total.is_finite() && grad_norm.is_finite()) {
                return Err(TrainError::NonFinite {
                    epoch,
                    step,
                    detail: format!(
                        "mean loss {total}, components {components:?}, \
                         |grad| {grad_norm}"
                    ),
                });
            }
            if config.grad_clip_norm > 0.0 && grad_norm > config.grad_clip_norm {
                grads.scale(T::from_f64(config.grad_clip_norm / grad_norm));
            }

            let record = StepRecord {
                epoch,
                step,
                lr: state.opt.learning_rate(),
                total,
                components,
                grad_norm,
            };
            state.opt.step(&mut state.net, &grads);
            state.last_loss = Some(total);
            observer.on_step(&record);
        }

        state.opt.end_epoch();
        observer.on_epoch_end(state);
        let completed = epoch + 1;
        if config.checkpoint_interval > 0
            && completed % config.checkpoint_interval == 0
            && completed < config.epochs
        {
            observer.on_checkpoint(state);
        }
    }
    Ok(())
}
