//! `keydet make-sequences`: renders synthetic evaluation sequences in the
//! standard benchmark layout — `seq-N/img1.png .. imgM.png` plus
//! `H1to2p .. H1toMp` ground-truth homographies, where `img1` is the
//! reference view and every file is reproducible from the seed.

use std::path::PathBuf;

use clap::Args;
use keydet_core::geometry::Homography;
use keydet_core::rng::{stream_rng, STREAM_SCENE};
use keydet_core::synth::{random_view_affine, Scene};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::homography;
use crate::imageio::save_gray;

#[derive(Debug, Args)]
pub struct MakeSequencesArgs {
    /// Directory to create the sequences under.
    #[arg(long)]
    pub out: PathBuf,
    /// Base configuration file (TOML); view ranges come from its
    /// `[augmentation]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of sequences.
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// Images per sequence (the reference plus `length - 1` warped views).
    #[arg(long, default_value_t = 4)]
    pub length: usize,
    /// Image side length, pixels.
    #[arg(long, default_value_t = 384)]
    pub size: usize,
    /// Scene and view seed.
    #[arg(long, default_value_t = 1001)]
    pub seed: u64,
}

pub fn run(args: &MakeSequencesArgs) -> Result<()> {
    if args.length < 2 {
        return Err(CliError::Input(
            "--length must be at least 2 (reference plus one view)".to_string(),
        ));
    }
    let run = RunConfig::load_or_default(args.config.as_deref())?;
    let ranges = run.augmentation;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    for s in 1..=args.count {
        let dir = args.out.join(format!("seq-{s}"));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let scene = Scene::random(args.seed, s as u64, args.size as f64);
        let reference = scene.rasterize::<f32>(args.size, args.size, &Homography::identity());
        save_gray(&dir.join("img1.png"), &reference)?;
        for n in 2..=args.length {
            // One view sub-stream per (sequence, image), disjoint from the
            // scene stream the same way the synthetic pair generator does it.
            let view_index = s as u64 ^ ((n as u64) << 48);
            let mut rng = stream_rng(args.seed, STREAM_SCENE, view_index);
            let g = random_view_affine(
                &mut rng,
                args.size,
                ranges.scale,
                ranges.shear,
                ranges.rotation_degrees,
                ranges.translation,
            );
            let h = Homography::from_affine(&g);
            let view = h
                .inverse()
                .expect("random view affines are invertible by construction");
            let warped = scene.rasterize::<f32>(args.size, args.size, &view);
            save_gray(&dir.join(format!("img{n}.png")), &warped)?;
            homography::save(&dir.join(format!("H1to{n}p")), &h)?;
        }
    }
    println!(
        "wrote {} sequence(s) of {} image(s) at {}x{} under {}",
        args.count,
        args.length,
        args.size,
        args.size,
        args.out.display()
    );
    Ok(())
}
