//! `keydet gradcheck`: audits every analytic gradient of the detector
//! against central finite differences, across all objective variants, in
//! 64-bit precision. The batch is evaluated through the same reduction
//! the trainer uses, so a pass certifies the gradients the optimizer
//! actually consumes.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use keydet_core::dataset::{AugmentationConfig, TupleGenerator};
use keydet_core::losses::{LossConfig, LossVariant};
use keydet_core::nn::gradcheck::{check_gradients, GradCheckConfig};
use keydet_core::nn::{Layer, Network};
use keydet_core::synth::synthetic_training_images;
use keydet_core::trainer::{batch_loss_and_grads, TupleSource};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Base configuration file (TOML); its loss coefficients are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Weight-init and sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Restrict to one convolution layer (1-based, front to back).
    #[arg(long)]
    pub layer: Option<usize>,
    /// Objective variant(s) to audit; repeatable. Default: all five.
    #[arg(long)]
    pub variant: Vec<String>,
    /// Tuples in the audited batch.
    #[arg(long, default_value_t = 3)]
    pub tuples: u64,
    /// Pass threshold on the max relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// Maps a 1-based convolution ordinal to its index in the layer stack
/// (pooling layers carry no parameters and are skipped by the audit).
fn conv_layer_index(net: &Network<f64>, ordinal: usize) -> Result<usize> {
    let mut seen = 0;
    for (idx, layer) in net.layers().iter().enumerate() {
        if matches!(layer, Layer::Conv(_)) {
            seen += 1;
            if seen == ordinal {
                return Ok(idx);
            }
        }
    }
    Err(CliError::Input(format!(
        "--layer {ordinal} out of range: the network has {seen} convolution layers"
    )))
}

fn parse_variants(names: &[String]) -> Result<Vec<LossVariant>> {
    if names.is_empty() {
        return Ok(LossVariant::ALL.to_vec());
    }
    names
        .iter()
        .map(|name| {
            LossVariant::from_name(name).ok_or_else(|| {
                CliError::Input(format!(
                    "unknown loss variant {name:?} (expected one of: {})",
                    LossVariant::ALL
                        .iter()
                        .map(|v| v.name())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })
        })
        .collect()
}

pub fn run(args: &GradcheckArgs) -> Result<()> {
    let run = RunConfig::load_or_default(args.config.as_deref())?;
    let variants = parse_variants(&args.variant)?;
    let started = Instant::now();

    // A small 64-bit batch through the trainer's own reduction. The affine
    // term is enabled from epoch 0 and the audit runs at a later epoch so
    // every term of every variant contributes to the objective.
    let images = synthetic_training_images::<f64>(args.seed ^ 0x9e37, 2, 96);
    let aug = AugmentationConfig {
        tuple_count: args.tuples,
        seed: args.seed,
        ..AugmentationConfig::default()
    };
    let gen = TupleGenerator::new(&images, aug).map_err(|e| CliError::Input(e.to_string()))?;
    let tuples: Vec<_> = (0..args.tuples).map(|i| gen.tuple(i)).collect();

    let net = Network::<f64>::detector(args.seed);
    let layer = match args.layer {
        Some(ordinal) => Some(conv_layer_index(&net, ordinal)?),
        None => None,
    };
    let check_cfg = GradCheckConfig {
        seed: args.seed,
        layer,
        ..GradCheckConfig::default()
    };
    let epoch = 5;

    let mut all_pass = true;
    for variant in variants {
        let loss = LossConfig {
            variant,
            alpha: run.loss.alpha,
            beta: run.loss.beta,
            identity_weight: run.loss.identity_weight,
            affine_enabled_epoch: 0,
        };
        loss.validate().map_err(CliError::Input)?;
        let (_, grads) = batch_loss_and_grads(&net, &tuples, &loss, epoch)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        let objective = |n: &Network<f64>| {
            batch_loss_and_grads(n, &tuples, &loss, epoch)
                .expect("objective must evaluate at perturbed parameters")
                .0
                .total()
        };
        let report = check_gradients(&net, &grads, objective, &check_cfg);

        // Non-finite values never win the max-error comparison, so hunt
        // them explicitly and name the first offender.
        let broken = report.checks.iter().find(|c| {
            !(c.analytic.is_finite() && c.numeric.is_finite() && c.rel_err.is_finite())
        });
        let ok = broken.is_none() && report.passes(args.tolerance);
        let status = if ok { "ok" } else { "FAIL" };
        match (broken, report.worst.map(|i| &report.checks[i])) {
            (Some(c), _) => println!(
                "{status} {:>8}: non-finite gradient at layer {} {} [{}] (analytic {}, numeric {})",
                variant.name(),
                c.layer,
                c.param,
                c.index,
                c.analytic,
                c.numeric
            ),
            (None, Some(w)) => println!(
                "{status} {:>8}: max rel err {:.3e} over {} coords (worst: layer {} {} [{}])",
                variant.name(),
                report.max_rel_err,
                report.checks.len(),
                w.layer,
                w.param,
                w.index
            ),
            (None, None) => println!("FAIL {:>8}: no coordinates audited", variant.name()),
        }
        all_pass &= ok && !report.checks.is_empty();
    }

    println!(
        "gradient audit finished in {:.1}s (tolerance {:.0e})",
        started.elapsed().as_secs_f64(),
        args.tolerance
    );
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Numeric(
            "gradient check failed; see per-variant lines above".to_string(),
        ))
    }
}
