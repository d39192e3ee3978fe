//! Orthonormal 2D DCT-II basis images.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::RealTensor;

fn dct_factor(k: usize, n: usize, i: usize) -> f64 {
    let a = if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    };
    a * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos()
}

/// Row-major `h × w` basis values for frequency `(u, v)`.
pub fn dct2_basis_values(u: usize, v: usize, h: usize, w: usize) -> Result<Vec<f64>> {
    if u >= h || v >= w {
        return Err(Error::invalid(format!(
            "DCT frequency ({u},{v}) outside a {h}x{w} grid"
        )));
    }
    let col: Vec<f64> = (0..w).map(|j| dct_factor(v, w, j)).collect();
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let r = dct_factor(u, h, i);
        out.extend(col.iter().map(|c| r * c));
    }
    Ok(out)
}

/// The `(u, v)` basis image as a `1 × 1 × h × w` tensor.
pub fn dct2_basis<T: Real>(u: usize, v: usize, h: usize, w: usize) -> Result<RealTensor<T>> {
    let vals = dct2_basis_values(u, v, h, w)?;
    RealTensor::new([1, 1, h, w], vals.into_iter().map(T::of).collect())
}
