//! Single-channel raster images and sampling.
//!
//! Coordinates follow the raster convention used throughout the crate:
//! `x` indexes columns rightward, `y` indexes rows downward, and the pixel at
//! integer `(x, y)` is centered on that continuous coordinate.

use alloc::vec;
use alloc::vec::Vec;

// `f64` inherent math methods only exist with `std`; the trait supplies them otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::real::Real;

/// ITU-R BT.601 luma weights for collapsing RGB to the single gray channel.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// BT.601 luma of one RGB triple (same scale as the inputs).
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
}

/// Row-major single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![T::zero(); width * height],
        }
    }

    /// Wraps row-major `data`. Panics if the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            width * height,
            "image data length must equal width * height"
        );
        Image {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.into_f64()))
                .collect(),
        }
    }

    /// Bilinear sample at a continuous coordinate, clamping to the border.
    ///
    /// Sampling is exact on integer coordinates and linear in between; points
    /// outside the image take the nearest border value.
    pub fn sample_clamped(&self, x: f64, y: f64) -> T {
        debug_assert!(self.width > 0 && self.height > 0);
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let cx = x.max(0.0).min(max_x);
        let cy = y.max(0.0).min(max_y);
        let x0 = cx.floor().min(max_x - 1.0).max(0.0);
        let y0 = cy.floor().min(max_y - 1.0).max(0.0);
        let fx = cx - x0;
        let fy = cy - y0;
        let (x0, y0) = (x0 as usize, y0 as usize);
        let (x1, y1) = (
            (x0 + 1).min(self.width - 1),
            (y0 + 1).min(self.height - 1),
        );
        let v00 = self.get(x0, y0).into_f64();
        let v10 = self.get(x1, y0).into_f64();
        let v01 = self.get(x0, y1).into_f64();
        let v11 = self.get(x1, y1).into_f64();
        let top = v00 + fx * (v10 - v00);
        let bot = v01 + fx * (v11 - v01);
        T::from_f64(top + fy * (bot - top))
    }

    /// Mean and population variance of all pixels, computed in f64.
    pub fn mean_variance(&self) -> (f64, f64) {
        mean_variance(&self.data)
    }

    /// Returns a standardized copy: zero mean, unit variance, with the
    /// variance floored at `VARIANCE_FLOOR` so constant images map to zero.
    pub fn standardized(&self) -> Image<T> {
        let mut out = self.clone();
        standardize(&mut out.data);
        out
    }
}

/// Variance floor applied during standardization; a constant input therefore
/// standardizes to exactly zero instead of dividing by zero.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Mean and population variance of a slice, accumulated in f64.
pub fn mean_variance<T: Real>(values: &[T]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v.into_f64();
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for v in values {
        let d = v.into_f64() - mean;
        ss += d * d;
    }
    (mean, ss / n)
}

/// In-place standardization: subtract the mean, divide by the floored
/// standard deviation. Statistics are computed in f64 regardless of `T`.
pub fn standardize<T: Real>(values: &mut [T]) {
    let (mean, var) = mean_variance(values);
    let inv = 1.0 / var.max(VARIANCE_FLOOR).sqrt();
    for v in values.iter_mut() {
        *v = T::from_f64((v.into_f64() - mean) * inv);
    }
}
