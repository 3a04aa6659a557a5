//! `keydet make-patches`: builds a training archive of patch tuples, from
//! either a directory of images or the built-in synthetic scene generator.

use std::path::PathBuf;

use clap::Args;
use keydet_core::dataset::TupleGenerator;
use keydet_core::synth::dense_training_images;
use keydet_core::trainer::TupleSource;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::archive;
use crate::imageio::load_gray;

#[derive(Debug, Args)]
pub struct MakePatchesArgs {
    /// Archive file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Base configuration file (TOML); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of source images to sample patches from.
    #[arg(long, conflicts_with = "synthetic")]
    pub source: Option<PathBuf>,
    /// Generate corner-rich synthetic source images instead.
    #[arg(long)]
    pub synthetic: bool,
    /// Number of tuples to generate (default from config: 256000).
    #[arg(long)]
    pub count: Option<u64>,
    /// Augmentation root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic mode: number of generated source images.
    #[arg(long, default_value_t = 8)]
    pub images: usize,
    /// Synthetic mode: source image side length, pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Synthetic mode: scene generator seed.
    #[arg(long, default_value_t = 7)]
    pub scene_seed: u64,
}

pub fn run(args: &MakePatchesArgs) -> Result<()> {
    let mut run = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(count) = args.count {
        run.augmentation.tuple_count = count;
    }
    if let Some(seed) = args.seed {
        run.augmentation.seed = seed;
    }
    let hash = run.hash();

    let images: Vec<keydet_core::image::Image<f32>> = match (&args.source, args.synthetic) {
        (Some(dir), false) => {
            let files = super::image_files(dir)?;
            let mut images = Vec::with_capacity(files.len());
            for file in &files {
                images.push(load_gray(file)?);
            }
            images
        }
        (None, true) => dense_training_images(args.scene_seed, args.images, args.size),
        (None, false) => {
            return Err(CliError::Input(
                "pass --source DIR or --synthetic to choose a patch source".to_string(),
            ))
        }
        (Some(_), true) => unreachable!("clap rejects --source with --synthetic"),
    };

    let aug = run.augmentation.to_core();
    let gen = TupleGenerator::new(&images, aug).map_err(|e| CliError::Input(e.to_string()))?;
    let count = aug.tuple_count;
    let mut writer = archive::Writer::create(&args.out, &hash, count)?;
    for i in 0..count {
        writer.append(&gen.tuple(i))?;
    }
    writer.finish()?;
    println!(
        "wrote {count} tuples from {} source image(s) to {} (config sha256:{hash})",
        images.len(),
        args.out.display()
    );
    Ok(())
}
