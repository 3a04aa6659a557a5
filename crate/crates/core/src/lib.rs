//! Core algorithms for training and evaluating a covariant keypoint detector.
//!
//! The crate is organized around the lifecycle of a learned detector:
//!
//! * [`nn`] — a from-scratch convolutional engine (forward, backward, SGD
//!   with momentum, gradient auditing) shared by 32x32 patch regression and
//!   dense fully-convolutional inference;
//! * [`geometry`] — affine transforms, homographies, and patch warping;
//! * [`dataset`] — augmentation-driven training tuples and synthetic scenes;
//! * [`losses`] — the covariance training objectives and their gradients;
//! * [`trainer`] — the deterministic epoch/batch loop;
//! * [`extractor`] — dense voting, non-maximum suppression, keypoints;
//! * [`evaluation`] — repeatability and matching-score metrics.
//!
//! Everything here is `no_std`-compatible (with `alloc`); file formats, CLI
//! plumbing, and threading live in the companion `keydet-cli` crate. All
//! stochastic code draws from explicit seeded streams ([`rng`]) and all
//! reductions run in fixed order, so identical inputs produce bit-identical
//! results on every run.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(feature = "std")]
extern crate std;

pub mod dataset;
pub mod evaluation;
pub mod extractor;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod nn;
pub mod parallel;
pub mod real;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use real::Real;
