//! 8-bit grayscale exports for inspection.

use std::path::Path;

use image::GrayImage;
use pidd_core::{Error, Result};

/// Per-image min-max scaling to 0..=255.
pub fn save_minmax(path: &Path, values: &[f64], height: usize, width: usize) -> Result<()> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scaled: Vec<f64> = values
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect();
    save_unit(path, &scaled, height, width)
}

/// Values in [0, 1] (clamped) mapped to 0..=255.
pub fn save_unit(path: &Path, values: &[f64], height: usize, width: usize) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::invalid("image size does not match dims"));
    }
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(width as u32, height as u32, bytes).expect("length checked");
    img.save(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}
