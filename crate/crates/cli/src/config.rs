//! Run configuration: a single TOML file mirroring the library's config
//! structs, plus the override and hashing plumbing shared by the
//! subcommands.
//!
//! Every subcommand resolves its settings the same way: built-in defaults,
//! then the `--config` file if given, then individual flags (flags win).
//! The resolved configuration is hashed (SHA-256 over its canonical TOML
//! form) and the hash is stamped into every output the tool writes, so any
//! artifact can be traced back to the exact settings that produced it.

use std::fs;
use std::path::Path;

use keydet_core::dataset::AugmentationConfig;
use keydet_core::extractor::ExtractConfig;
use keydet_core::losses::{LossConfig, LossVariant};
use keydet_core::nn::OptimizerConfig;
use keydet_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Tuple-generation settings (`[augmentation]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSection {
    pub scale: [f64; 2],
    pub shear: [f64; 2],
    pub rotation_degrees: [f64; 2],
    pub jitter: [f64; 2],
    pub translation: [f64; 2],
    pub tuple_count: u64,
    pub seed: u64,
}

impl Default for AugmentationSection {
    fn default() -> Self {
        let c = AugmentationConfig::default();
        AugmentationSection {
            scale: c.scale,
            shear: c.shear,
            rotation_degrees: c.rotation_degrees,
            jitter: c.jitter,
            translation: c.translation,
            tuple_count: c.tuple_count,
            seed: c.seed,
        }
    }
}

impl AugmentationSection {
    pub fn to_core(&self) -> AugmentationConfig {
        AugmentationConfig {
            scale: self.scale,
            shear: self.shear,
            rotation_degrees: self.rotation_degrees,
            jitter: self.jitter,
            translation: self.translation,
            tuple_count: self.tuple_count,
            seed: self.seed,
        }
    }
}

/// Optimization-loop settings (`[training]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub chunk_size: usize,
    pub seed: u64,
    pub grad_clip_norm: f64,
    pub checkpoint_interval: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainingSection {
            epochs: c.epochs,
            batch_size: c.batch_size,
            chunk_size: c.chunk_size,
            seed: c.seed,
            grad_clip_norm: c.grad_clip_norm,
            checkpoint_interval: c.checkpoint_interval,
        }
    }
}

/// Objective settings (`[loss]`). The variant is kept as its flag-facing
/// name and validated when the sections are lowered to library configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub variant: String,
    pub alpha: f64,
    pub beta: f64,
    pub identity_weight: f64,
    pub affine_enabled_epoch: usize,
}

impl Default for LossSection {
    fn default() -> Self {
        let c = LossConfig::default();
        LossSection {
            variant: c.variant.name().to_string(),
            alpha: c.alpha,
            beta: c.beta,
            identity_weight: c.identity_weight,
            affine_enabled_epoch: c.affine_enabled_epoch,
        }
    }
}

impl LossSection {
    pub fn to_core(&self) -> Result<LossConfig> {
        let variant = LossVariant::from_name(&self.variant).ok_or_else(|| {
            CliError::Input(format!(
                "unknown loss variant {:?} (expected one of: {})",
                self.variant,
                LossVariant::ALL
                    .iter()
                    .map(|v| v.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
        let config = LossConfig {
            variant,
            alpha: self.alpha,
            beta: self.beta,
            identity_weight: self.identity_weight,
            affine_enabled_epoch: self.affine_enabled_epoch,
        };
        config.validate().map_err(CliError::Input)?;
        Ok(config)
    }
}

/// Learning-rate schedule settings (`[optimizer]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub lr0: f64,
    pub momentum: f64,
    pub decay: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let c = OptimizerConfig::default();
        OptimizerSection {
            lr0: c.lr0,
            momentum: c.momentum,
            decay: c.decay,
        }
    }
}

impl OptimizerSection {
    pub fn to_core(&self) -> OptimizerConfig {
        OptimizerConfig {
            lr0: self.lr0,
            momentum: self.momentum,
            decay: self.decay,
        }
    }
}

/// Keypoint-extraction settings (`[extraction]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSection {
    pub k: usize,
    pub nms_radius: usize,
    pub blur: bool,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        let c = ExtractConfig::default();
        ExtractionSection {
            k: c.k,
            nms_radius: c.nms_radius,
            blur: c.blur,
        }
    }
}

impl ExtractionSection {
    pub fn to_core(&self) -> ExtractConfig {
        ExtractConfig {
            k: self.k,
            nms_radius: self.nms_radius,
            blur: self.blur,
        }
    }
}

/// Benchmark settings (`[evaluation]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Region-overlap threshold for a correspondence.
    pub overlap_threshold: f64,
    /// Detection budgets the report covers, one section per entry.
    pub ks: Vec<usize>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            overlap_threshold: keydet_core::evaluation::OVERLAP_THRESHOLD,
            ks: vec![200, 1000],
        }
    }
}

/// The whole resolved configuration of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub augmentation: AugmentationSection,
    pub training: TrainingSection,
    pub loss: LossSection,
    pub optimizer: OptimizerSection,
    pub extraction: ExtractionSection,
    pub evaluation: EvaluationSection,
}

impl RunConfig {
    /// Parses a TOML config file. Unknown keys are rejected so typos fail
    /// loudly instead of silently running on defaults.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// Loads `path` when given, otherwise starts from defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    /// Lowers the training-related sections into the library's config,
    /// validating cross-field constraints on the way.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let config = TrainConfig {
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            chunk_size: self.training.chunk_size,
            loss: self.loss.to_core()?,
            opt: self.optimizer.to_core(),
            seed: self.training.seed,
            grad_clip_norm: self.training.grad_clip_norm,
            checkpoint_interval: self.training.checkpoint_interval,
        };
        config
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))?;
        Ok(config)
    }

    /// SHA-256 of the canonical TOML serialization, as lowercase hex. This
    /// is the identity stamped into checkpoints, archives, keypoint files
    /// and reports.
    pub fn hash(&self) -> String {
        let canonical =
            toml::to_string(self).expect("config serialization cannot fail");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sections_match_library_defaults() {
        let run = RunConfig::default();
        assert_eq!(run.augmentation.to_core(), AugmentationConfig::default());
        assert_eq!(run.loss.to_core().unwrap(), LossConfig::default());
        assert_eq!(run.train_config().unwrap(), TrainConfig::default());
        assert_eq!(run.extraction.to_core(), ExtractConfig::default());
    }

    #[test]
    fn partial_file_fills_missing_sections_with_defaults() {
        let parsed: RunConfig =
            toml::from_str("[training]\nepochs = 3\n[loss]\nvariant = \"trip\"\n").unwrap();
        assert_eq!(parsed.training.epochs, 3);
        assert_eq!(parsed.loss.variant, "trip");
        assert_eq!(parsed.training.batch_size, TrainConfig::default().batch_size);
        assert_eq!(parsed.optimizer, OptimizerSection::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[training]\nepochz = 3\n");
        assert!(err.is_err());
    }

    #[test]
    fn unknown_variant_is_an_input_error() {
        let section = LossSection {
            variant: "trip-afff".to_string(),
            ..LossSection::default()
        };
        let err = section.to_core().unwrap_err();
        assert!(matches!(err, CliError::Input(_)));
        assert!(err.to_string().contains("trip-afff"));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = RunConfig::default();
        c.training.seed = 1;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut run = RunConfig::default();
        run.loss.variant = "covdet".to_string();
        run.evaluation.ks = vec![50];
        let text = toml::to_string(&run).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(run, back);
    }
}
