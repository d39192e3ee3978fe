//! Sobel edge magnitude with replicate padding and a guarded square root.
//!
//! `G_x = [[-1,0,1],[-2,0,2],[-1,0,1]]` (cross-correlation), `G_y = G_xᵀ`,
//! output `sqrt(G_x² + G_y² + 1e-12)`.

use crate::error::{Error, Result};
use crate::real::Real;

/// Added under the square root so the derivative exists on flat regions.
pub const SOBEL_GUARD: f64 = 1e-12;

const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const KY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap<T> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
}

/// Forward intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct SobelCache<T> {
    height: usize,
    width: usize,
    gx: Vec<T>,
    gy: Vec<T>,
    out: Vec<T>,
}

fn check_dims(len: usize, h: usize, w: usize) -> Result<()> {
    if h < 3 || w < 3 {
        return Err(Error::invalid(format!("Sobel needs at least 3x3, got {h}x{w}")));
    }
    if len != h * w {
        return Err(Error::invalid("Sobel input length does not match dims"));
    }
    Ok(())
}

#[inline]
fn clamp(v: isize, n: usize) -> usize {
    v.clamp(0, n as isize - 1) as usize
}

fn correlate<T: Real>(img: &[T], h: usize, w: usize, k: &[[f64; 3]; 3]) -> Vec<T> {
    let mut out = vec![T::zero(); h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = T::zero();
            for (di, row) in k.iter().enumerate() {
                let ii = clamp(i as isize + di as isize - 1, h);
                for (dj, &kv) in row.iter().enumerate() {
                    if kv != 0.0 {
                        let jj = clamp(j as isize + dj as isize - 1, w);
                        acc = acc + T::of(kv) * img[ii * w + jj];
                    }
                }
            }
            out[i * w + j] = acc;
        }
    }
    out
}

/// Adjoint of [`correlate`], replicate padding included.
fn correlate_adjoint<T: Real>(g: &[T], h: usize, w: usize, k: &[[f64; 3]; 3], acc: &mut [T]) {
    for i in 0..h {
        for j in 0..w {
            let gv = g[i * w + j];
            if gv == T::zero() {
                continue;
            }
            for (di, row) in k.iter().enumerate() {
                let ii = clamp(i as isize + di as isize - 1, h);
                for (dj, &kv) in row.iter().enumerate() {
                    if kv != 0.0 {
                        let jj = clamp(j as isize + dj as isize - 1, w);
                        acc[ii * w + jj] = acc[ii * w + jj] + T::of(kv) * gv;
                    }
                }
            }
        }
    }
}

pub fn sobel<T: Real>(img: &[T], height: usize, width: usize) -> Result<EdgeMap<T>> {
    let cache = sobel_forward(img, height, width)?;
    Ok(EdgeMap {
        height,
        width,
        values: cache.out,
    })
}

/// Forward pass keeping what [`sobel_backward`] needs.
pub fn sobel_forward<T: Real>(img: &[T], height: usize, width: usize) -> Result<SobelCache<T>> {
    check_dims(img.len(), height, width)?;
    let gx = correlate(img, height, width, &KX);
    let gy = correlate(img, height, width, &KY);
    let guard = T::of(SOBEL_GUARD);
    let out = gx
        .iter()
        .zip(&gy)
        .map(|(&a, &b)| (a * a + b * b + guard).sqrt())
        .collect();
    Ok(SobelCache {
        height,
        width,
        gx,
        gy,
        out,
    })
}

impl<T: Real> SobelCache<T> {
    pub fn output(&self) -> &[T] {
        &self.out
    }
}

/// Gradient with respect to the input image given the output gradient.
pub fn sobel_backward<T: Real>(cache: &SobelCache<T>, grad_out: &[T]) -> Result<Vec<T>> {
    let (h, w) = (cache.height, cache.width);
    if grad_out.len() != h * w {
        return Err(Error::invalid("Sobel output gradient length does not match dims"));
    }
    let mut dgx = vec![T::zero(); h * w];
    let mut dgy = vec![T::zero(); h * w];
    for p in 0..h * w {
        let s = grad_out[p] / cache.out[p];
        dgx[p] = s * cache.gx[p];
        dgy[p] = s * cache.gy[p];
    }
    let mut din = vec![T::zero(); h * w];
    correlate_adjoint(&dgx, h, w, &KX, &mut din);
    correlate_adjoint(&dgy, h, w, &KY, &mut din);
    Ok(din)
}
