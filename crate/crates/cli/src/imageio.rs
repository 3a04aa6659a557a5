//! Grayscale image files.
//!
//! Images load as `f32` intensities in `[0, 1]` (any format the `image`
//! crate decodes; color inputs are converted to luma). Writing uses 16-bit
//! grayscale so synthetic scenes survive a save/load round trip with ~1e-5
//! quantization, which is well below the contrast the detector works at.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use keydet_core::image::Image;

use crate::error::{CliError, Result};

pub fn load_gray(path: &Path) -> Result<Image<f32>> {
    let decoded = image::open(path).map_err(|e| CliError::io(path, e))?;
    let luma = decoded.to_luma16();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let data: Vec<f32> = luma
        .into_raw()
        .into_iter()
        .map(|v| v as f32 / u16::MAX as f32)
        .collect();
    Ok(Image::from_vec(w, h, data))
}

pub fn save_gray(path: &Path, img: &Image<f32>) -> Result<()> {
    let data: Vec<u16> = img
        .data()
        .iter()
        .map(|&v| (f64::from(v).clamp(0.0, 1.0) * f64::from(u16::MAX)).round() as u16)
        .collect();
    let buffer: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data)
            .expect("buffer length matches dimensions");
    DynamicImage::ImageLuma16(buffer)
        .save(path)
        .map_err(|e| CliError::io(path, e))
}

/// Saves a nonnegative raster (e.g. a vote map) normalized by its maximum.
pub fn save_normalized_map(path: &Path, values: &[f64], width: usize, height: usize) -> Result<()> {
    let peak = values.iter().fold(0.0f64, |m, &v| m.max(v));
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let data: Vec<f32> = values.iter().map(|&v| (v * scale) as f32).collect();
    save_gray(path, &Image::from_vec(width, height, data))
}
