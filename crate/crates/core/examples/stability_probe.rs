//! Throwaway calibration experiment (not part of the shipped artifact):
//! trains the default objective at the end-to-end protocol scale across a
//! small matrix of training-data and extraction settings, then measures
//! repeatability on held-out synthetic pairs against a random baseline.

use std::time::Instant;

use keydet_core::dataset::{AugmentationConfig, TupleGenerator};
use keydet_core::evaluation::{repeatability, Frame, OVERLAP_THRESHOLD};
use keydet_core::extractor::{extract, ExtractConfig, Keypoint, SUPPORT_RADIUS};
use keydet_core::geometry::Vec2;
use keydet_core::image::Image;
use keydet_core::parallel::SequentialMapper;
use keydet_core::rng::{stream_rng, STREAM_SCENE};
use keydet_core::synth::{dense_training_images, synthetic_pair, synthetic_training_images};
use keydet_core::trainer::{train, StepRecord, TrainConfig, TrainObserver, TrainState};
use rand::Rng;

struct Collect {
    records: Vec<StepRecord>,
}

impl TrainObserver<f32> for Collect {
    fn on_step(&mut self, r: &StepRecord) {
        self.records.push(*r);
    }
}

const EVAL_SEED: u64 = 1001;
const EVAL_SIZE: usize = 384;
const EVAL_PAIRS: u64 = 20;
const K: usize = 50;

fn random_keypoints(seed: u64, index: u64, size: usize) -> Vec<Keypoint> {
    let mut rng = stream_rng(seed, STREAM_SCENE, index);
    (0..K)
        .map(|_| Keypoint {
            pos: Vec2::new(
                rng.gen_range(0.0..(size - 1) as f64),
                rng.gen_range(0.0..(size - 1) as f64),
            ),
            score: 1.0,
            radius: SUPPORT_RADIUS,
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn eval_pairs() -> Vec<(Image<f32>, Image<f32>, keydet_core::geometry::Homography)> {
    let ranges = AugmentationConfig::default();
    (0..EVAL_PAIRS)
        .map(|i| {
            synthetic_pair::<f32>(
                EVAL_SEED,
                i,
                EVAL_SIZE,
                ranges.scale,
                ranges.shear,
                ranges.rotation_degrees,
                ranges.translation,
            )
        })
        .collect()
}

fn main() {
    let pairs = eval_pairs();

    let mut base = Vec::new();
    for (i, (a, b, h)) in pairs.iter().enumerate() {
        let ka = random_keypoints(9000, 2 * i as u64, EVAL_SIZE);
        let kb = random_keypoints(9000, 2 * i as u64 + 1, EVAL_SIZE);
        let r = repeatability(&ka, &kb, h, Frame::of(a), Frame::of(b), OVERLAP_THRESHOLD);
        base.push(r.repeatability.unwrap_or(0.0));
    }
    let baseline = mean(&base);
    println!("random baseline: mean rep {baseline:.4}");

    // (label, dense scenes?, tuples)
    let runs = [
        ("sparse-4096", false, 4096u64),
        ("dense-4096", true, 4096),
        ("dense-8192", true, 8192),
    ];

    for (label, dense, tuples) in runs {
        let t0 = Instant::now();
        let images = if dense {
            dense_training_images::<f32>(7, 8, 256)
        } else {
            synthetic_training_images::<f32>(7, 8, 256)
        };
        let aug = AugmentationConfig {
            tuple_count: tuples,
            seed: 3,
            ..AugmentationConfig::default()
        };
        let gen = TupleGenerator::new(&images, aug).unwrap();
        let config = TrainConfig {
            grad_clip_norm: 0.5,
            seed: 11,
            ..TrainConfig::default()
        };
        let mut state = TrainState::new(config).unwrap();
        let mut obs = Collect {
            records: Vec::new(),
        };
        match train(&mut state, &gen, &config, &SequentialMapper, &mut obs) {
            Ok(()) => {}
            Err(e) => {
                println!("{label}: training failed: {e}");
                continue;
            }
        }
        let train_secs = t0.elapsed().as_secs_f64();

        let first = obs.records[0].components.cov_tran;
        let epoch_mean = |e: usize| {
            let vals: Vec<f64> = obs
                .records
                .iter()
                .filter(|r| r.epoch == e)
                .map(|r| r.components.cov_tran)
                .collect();
            mean(&vals)
        };

        for blur in [false, true] {
            let t1 = Instant::now();
            let cfg = ExtractConfig {
                k: K,
                blur,
                ..ExtractConfig::default()
            };
            let mut reps = Vec::new();
            for (a, b, h) in &pairs {
                let ka = extract(a, &state.net, &cfg).unwrap().keypoints;
                let kb = extract(b, &state.net, &cfg).unwrap().keypoints;
                let r =
                    repeatability(&ka, &kb, h, Frame::of(a), Frame::of(b), OVERLAP_THRESHOLD);
                reps.push(r.repeatability.unwrap_or(0.0));
            }
            let eval_secs = t1.elapsed().as_secs_f64();
            println!(
                "{label} blur={blur}: train {train_secs:.0}s eval {eval_secs:.0}s | cov_tran first {first:.1} e4 {:.1} e5 {:.1} e9 {:.1} | rep {:.4} = {:.2}x baseline",
                epoch_mean(4),
                epoch_mean(5),
                epoch_mean(9),
                mean(&reps),
                mean(&reps) / baseline.max(1e-9),
            );
        }
    }
}
