//! `keydet extract`: runs the dense detector over whole images and writes
//! one keypoint file per image, optionally dumping the vote map as a
//! raster for inspection.

use std::path::{Path, PathBuf};

use clap::Args;
use keydet_core::extractor::{extract_with, ExtractError};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::checkpoint;
use crate::formats::keypoints::{self, KeypointHeader};
use crate::imageio::{load_gray, save_normalized_map};
use crate::parallel::{resolve_threads, PoolMapper};

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Trained checkpoint to extract with.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Images to process.
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Base configuration file (TOML); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for output files (default: next to each image).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Detection budget.
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Non-maximum-suppression radius, pixels.
    #[arg(long)]
    pub nms_radius: Option<usize>,
    /// Box-blur the vote map before suppression.
    #[arg(long)]
    pub blur: bool,
    /// Also write the vote map as a 16-bit PNG next to the keypoints.
    #[arg(long)]
    pub dump_votemap: bool,
    /// Grid rows per parallel work item in the dense pass.
    #[arg(long)]
    pub band_rows: Option<usize>,
    /// Worker threads (default: KEYDET_THREADS or all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

fn output_path(image: &Path, out_dir: Option<&Path>, suffix: &str) -> PathBuf {
    let stem = image.file_stem().unwrap_or(image.as_os_str());
    let mut name = stem.to_os_string();
    name.push(suffix);
    match out_dir {
        Some(dir) => dir.join(name),
        None => image.with_file_name(name),
    }
}

fn extract_error(image: &Path, err: ExtractError) -> CliError {
    match err {
        ExtractError::TooSmall { .. } => CliError::input(image, err),
        ExtractError::Net(_) => CliError::Numeric(format!("{}: {err}", image.display())),
    }
}

pub fn run(args: &ExtractArgs) -> Result<()> {
    let mut run = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(k) = args.k {
        run.extraction.k = k;
    }
    if let Some(r) = args.nms_radius {
        run.extraction.nms_radius = r;
    }
    if args.blur {
        run.extraction.blur = true;
    }
    let hash = run.hash();
    let cfg = run.extraction.to_core();

    let (state, _) = checkpoint::load(&args.checkpoint)?;
    let ckpt_hash = checkpoint::file_hash(&args.checkpoint)?;
    let threads = resolve_threads(args.threads)?;
    let mapper = PoolMapper::new(threads)?;
    let band_rows = args.band_rows.unwrap_or(usize::MAX);

    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }

    for image_path in &args.images {
        let image = load_gray(image_path)?;
        let extraction = extract_with(&image, &state.net, &cfg, &mapper, band_rows)
            .map_err(|e| extract_error(image_path, e))?;
        let header = KeypointHeader {
            image: image_path.display().to_string(),
            checkpoint: args.checkpoint.display().to_string(),
            checkpoint_hash: ckpt_hash.clone(),
            config_hash: hash.clone(),
            k: cfg.k,
            nms_radius: cfg.nms_radius,
        };
        let out = output_path(image_path, args.out_dir.as_deref(), ".keypoints");
        keypoints::save(&out, &header, &extraction.keypoints)?;
        let votes = &extraction.votes;
        println!(
            "{}: {} keypoints ({} votes in bounds, {} dropped) -> {}",
            image_path.display(),
            extraction.keypoints.len(),
            votes.in_bounds,
            votes.dropped,
            out.display()
        );
        if args.dump_votemap {
            let map_out = output_path(image_path, args.out_dir.as_deref(), ".votemap.png");
            save_normalized_map(&map_out, &votes.values, votes.width, votes.height)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_path_handles_dirs_and_suffixes() {
        assert_eq!(
            output_path(Path::new("data/img1.png"), None, ".keypoints"),
            Path::new("data/img1.keypoints")
        );
        assert_eq!(
            output_path(Path::new("data/img1.png"), Some(Path::new("out")), ".votemap.png"),
            Path::new("out/img1.votemap.png")
        );
    }
}
