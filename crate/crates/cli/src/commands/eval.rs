//! `keydet eval`: repeatability and matching-score benchmark over
//! benchmark-layout sequences (`img1..imgM` plus `H1toNp` ground truth).
//! Detections come either from checkpoints (extracted in-process, one run
//! per checkpoint) or from keypoint files written earlier by `extract`
//! (one run per directory). Metrics are aggregated across runs as
//! mean ± population standard deviation.

use std::path::{Path, PathBuf};

use clap::Args;
use keydet_core::evaluation::{matching_score, repeatability, Frame};
use keydet_core::extractor::{extract_with, Keypoint};
use keydet_core::geometry::Homography;
use keydet_core::image::Image;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::report::{render_csv, render_plot_data, render_text, PairMetrics, ReportData};
use crate::formats::{checkpoint, homography, keypoints};
use crate::imageio::load_gray;
use crate::parallel::{resolve_threads, PoolMapper};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Sequence directories to evaluate.
    #[arg(long, required = true)]
    pub sequences: Vec<PathBuf>,
    /// Checkpoint(s) to evaluate; each is one run.
    #[arg(long, conflicts_with = "keypoints")]
    pub checkpoint: Vec<PathBuf>,
    /// Directories of precomputed keypoint files (mirroring the sequence
    /// layout: DIR/<sequence>/imgN.keypoints); each is one run.
    #[arg(long)]
    pub keypoints: Vec<PathBuf>,
    /// Base configuration file (TOML); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Expected number of runs; errors if it disagrees with the sources.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Write <prefix>.txt and <prefix>.csv (and .tsv with --emit-plot-data).
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
    /// Region-overlap threshold for a correspondence.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Detection budget(s); repeatable. Default from config: 200 and 1000.
    #[arg(short, long)]
    pub k: Vec<usize>,
    /// Also write columnar per-run data for external plotting.
    #[arg(long)]
    pub emit_plot_data: bool,
    /// Worker threads (default: KEYDET_THREADS or all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

struct Sequence {
    name: String,
    images: Vec<Image<f32>>,
    /// `homographies[n - 2]` maps the `img1` frame to the `img{n}` frame.
    homographies: Vec<Homography>,
}

/// Loads a benchmark-layout sequence directory.
fn load_sequence(dir: &Path) -> Result<Sequence> {
    if !dir.is_dir() {
        return Err(CliError::input(dir, "sequence directory not found"));
    }
    let files = super::image_files(dir)?;
    let mut indexed: Vec<(usize, &PathBuf)> = Vec::new();
    for file in &files {
        let stem = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        if let Some(n) = stem.strip_prefix("img").and_then(|d| d.parse::<usize>().ok()) {
            indexed.push((n, file));
        }
    }
    indexed.sort_by_key(|(n, _)| *n);
    if indexed.len() < 2 {
        return Err(CliError::input(
            dir,
            "expected at least img1 and img2 image files",
        ));
    }
    for (want, (got, _)) in (1..).zip(&indexed) {
        if *got != want {
            return Err(CliError::input(
                dir,
                format!("image numbering has a gap: expected img{want}, found img{got}"),
            ));
        }
    }
    let mut images = Vec::with_capacity(indexed.len());
    for (_, file) in &indexed {
        images.push(load_gray(file)?);
    }
    let mut homographies = Vec::with_capacity(images.len() - 1);
    for n in 2..=images.len() {
        homographies.push(homography::load(&dir.join(format!("H1to{n}p")))?);
    }
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(Sequence {
        name,
        images,
        homographies,
    })
}

/// Detections for every image of every sequence, for one run: indexed
/// `[sequence][image]`, already truncated to the budget under evaluation.
type RunDetections = Vec<Vec<Vec<Keypoint>>>;

fn detections_from_checkpoint(
    state: &keydet_core::trainer::TrainState<f32>,
    sequences: &[Sequence],
    run_cfg: &RunConfig,
    k_max: usize,
    mapper: &PoolMapper,
) -> Result<RunDetections> {
    let cfg = keydet_core::extractor::ExtractConfig {
        k: k_max,
        ..run_cfg.extraction.to_core()
    };
    sequences
        .iter()
        .map(|seq| {
            seq.images
                .iter()
                .map(|image| {
                    extract_with(image, &state.net, &cfg, mapper, usize::MAX)
                        .map(|e| e.keypoints)
                        .map_err(|e| CliError::Numeric(format!("{}: {e}", seq.name)))
                })
                .collect()
        })
        .collect()
}

fn detections_from_files(
    dir: &Path,
    sequences: &[Sequence],
    expected_k: &mut Option<usize>,
) -> Result<RunDetections> {
    sequences
        .iter()
        .map(|seq| {
            (1..=seq.images.len())
                .map(|n| {
                    let path = dir.join(&seq.name).join(format!("img{n}.keypoints"));
                    let (header, kps) = keypoints::load(&path)?;
                    match expected_k {
                        Some(k) if *k != header.k => Err(CliError::input(
                            &path,
                            format!("keypoint files disagree on k ({k} vs {})", header.k),
                        )),
                        Some(_) => Ok(kps),
                        None => {
                            *expected_k = Some(header.k);
                            Ok(kps)
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// One metric row per (sequence, pair), with per-run values at budget `k`.
fn section_rows(
    sequences: &[Sequence],
    runs: &[RunDetections],
    k: usize,
    threshold: f64,
) -> Vec<PairMetrics> {
    let mut rows = Vec::new();
    for (s, seq) in sequences.iter().enumerate() {
        for n in 2..=seq.images.len() {
            let h = &seq.homographies[n - 2];
            let frame_a = Frame::of(&seq.images[0]);
            let frame_b = Frame::of(&seq.images[n - 1]);
            let mut rep_runs = Vec::with_capacity(runs.len());
            let mut match_runs = Vec::with_capacity(runs.len());
            for run in runs {
                let ka = truncate(&run[s][0], k);
                let kb = truncate(&run[s][n - 1], k);
                let rep = repeatability(ka, kb, h, frame_a, frame_b, threshold);
                rep_runs.push(rep.repeatability);
                let m = matching_score(
                    &seq.images[0],
                    &seq.images[n - 1],
                    ka,
                    kb,
                    h,
                    threshold,
                );
                match_runs.push(m.score);
            }
            rows.push(PairMetrics {
                sequence: seq.name.clone(),
                pair: format!("1-{n}"),
                repeatability: rep_runs,
                matching: match_runs,
            });
        }
    }
    rows
}

/// The top-`k` prefix of a descending-score detection list. Selection
/// sorts before truncating, so the prefix of a larger budget equals the
/// smaller budget's own output.
fn truncate(kps: &[Keypoint], k: usize) -> &[Keypoint] {
    &kps[..kps.len().min(k)]
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let mut run_cfg = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(t) = args.threshold {
        run_cfg.evaluation.overlap_threshold = t;
    }
    if !args.k.is_empty() {
        run_cfg.evaluation.ks = args.k.clone();
    }
    let hash = run_cfg.hash();
    let threshold = run_cfg.evaluation.overlap_threshold;

    let sequences: Vec<Sequence> = args
        .sequences
        .iter()
        .map(|dir| load_sequence(dir))
        .collect::<Result<_>>()?;

    let (run_names, runs, ks) = if !args.checkpoint.is_empty() {
        let mapper = PoolMapper::new(resolve_threads(args.threads)?)?;
        let ks = run_cfg.evaluation.ks.clone();
        let k_max = ks.iter().copied().max().unwrap_or(200);
        let mut runs = Vec::with_capacity(args.checkpoint.len());
        for path in &args.checkpoint {
            let (state, _) = checkpoint::load(path)?;
            runs.push(detections_from_checkpoint(
                &state, &sequences, &run_cfg, k_max, &mapper,
            )?);
        }
        let names = args
            .checkpoint
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        (names, runs, ks)
    } else if !args.keypoints.is_empty() {
        let mut expected_k = None;
        let mut runs = Vec::with_capacity(args.keypoints.len());
        for dir in &args.keypoints {
            runs.push(detections_from_files(dir, &sequences, &mut expected_k)?);
        }
        let k = expected_k.expect("at least one keypoint file was read");
        let names = args
            .keypoints
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        (names, runs, vec![k])
    } else {
        return Err(CliError::Input(
            "pass --checkpoint CKPT (repeatable) or --keypoints DIR to supply detections"
                .to_string(),
        ));
    };

    if let Some(expected) = args.runs {
        if expected != runs.len() {
            return Err(CliError::Input(format!(
                "--runs {expected} but {} detection source(s) given",
                runs.len()
            )));
        }
    }

    let sections = ks
        .iter()
        .map(|&k| (k, section_rows(&sequences, &runs, k, threshold)))
        .collect();
    let data = ReportData {
        config_hash: hash,
        checkpoints: run_names,
        overlap_threshold: threshold,
        sections,
    };

    let text = render_text(&data);
    print!("{text}");
    if let Some(prefix) = &args.out_prefix {
        if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        let txt = prefix.with_extension("txt");
        std::fs::write(&txt, &text).map_err(|e| CliError::io(&txt, e))?;
        let csv = prefix.with_extension("csv");
        std::fs::write(&csv, render_csv(&data)).map_err(|e| CliError::io(&csv, e))?;
        if args.emit_plot_data {
            let tsv = prefix.with_extension("tsv");
            std::fs::write(&tsv, render_plot_data(&data)).map_err(|e| CliError::io(&tsv, e))?;
        }
    } else if args.emit_plot_data {
        return Err(CliError::Input(
            "--emit-plot-data needs --out-prefix to know where to write".to_string(),
        ));
    }
    Ok(())
}
