//! Subcommand implementations. Each submodule owns its clap argument
//! struct and a `run` entry point returning the shared [`crate::error::Result`];
//! `main` only dispatches and maps errors to exit codes.

pub mod eval;
pub mod extract;
pub mod gradcheck;
pub mod make_patches;
pub mod make_sequences;
pub mod train;

use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// Extensions the image loader accepts when scanning a directory.
const IMAGE_EXTENSIONS: &[&str] = &["png", "pnm", "pgm", "ppm", "jpg", "jpeg", "bmp", "tif", "tiff"];

/// Lists the image files of `dir` in sorted order. Errors if the directory
/// is missing (naming it) or contains no images.
pub(crate) fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::input(dir, "source directory not found"));
    }
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let path = entry.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::input(dir, "no image files found"));
    }
    Ok(files)
}

/// Maps a training failure onto the exit-code taxonomy: configuration and
/// compatibility problems are input errors, numeric blowups and internal
/// shape violations are numeric failures.
pub(crate) fn train_error(err: keydet_core::trainer::TrainError) -> CliError {
    use keydet_core::trainer::TrainError;
    match err {
        TrainError::Config(_) | TrainError::Incompatible(_) => CliError::Input(err.to_string()),
        TrainError::NonFinite { .. } | TrainError::Net(_) => CliError::Numeric(err.to_string()),
    }
}
