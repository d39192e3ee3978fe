//! Centered, orthonormal 2D Fourier transforms.
//!
//! k-space is stored with the DC coefficient at `(h/2, w/2)`. The forward
//! transform is `fftshift(FFT(ifftshift(x))) / sqrt(h*w)` and the inverse is its
//! exact adjoint, so Parseval holds without extra factors.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::real::Real;

/// Reusable row/column plans for one image size.
pub struct Fft2Plan<T: Real> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> Fft2Plan<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
            scale: T::one() / T::of(((height * width) as f64).sqrt()),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Centered orthonormal forward transform of one `height × width` plane.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, false);
    }

    /// Centered orthonormal inverse transform of one `height × width` plane.
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, true);
    }

    fn transform(&self, buf: &mut [Complex<T>], inverse: bool) {
        let (h, w) = (self.height, self.width);
        assert_eq!(buf.len(), h * w, "plane size does not match plan");
        roll2(buf, h, w, h - h / 2, w - w / 2);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(buf);
        let mut t = transpose(buf, h, w);
        col.process(&mut t);
        let back = transpose(&t, w, h);
        buf.copy_from_slice(&back);
        roll2(buf, h, w, h / 2, w / 2);
        for v in buf.iter_mut() {
            *v = *v * self.scale;
        }
    }
}

fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for j in 0..cols {
        for i in 0..rows {
            out.push(src[i * cols + j]);
        }
    }
    out
}

/// Circular shift: `out[(i + si) % h][(j + sj) % w] = in[i][j]`.
pub fn roll2<T: Copy>(buf: &mut [T], h: usize, w: usize, si: usize, sj: usize) {
    if si % h == 0 && sj % w == 0 {
        return;
    }
    let src = buf.to_vec();
    for i in 0..h {
        let di = (i + si) % h;
        for j in 0..w {
            buf[di * w + (j + sj) % w] = src[i * w + j];
        }
    }
}

/// Moves the zero-frequency bin from index 0 to the array center.
pub fn fftshift<T: Copy>(buf: &mut [T], h: usize, w: usize) {
    roll2(buf, h, w, h / 2, w / 2);
}

/// Inverse of [`fftshift`] (differs from it for odd sizes).
pub fn ifftshift<T: Copy>(buf: &mut [T], h: usize, w: usize) {
    roll2(buf, h, w, h - h / 2, w - w / 2);
}

fn check_finite<T: Real>(img: &ComplexImage<T>) -> Result<()> {
    if img.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("non-finite value in FFT input"))
    }
}

pub fn fft2_centered<T: Real>(img: &ComplexImage<T>) -> Result<ComplexImage<T>> {
    check_finite(img)?;
    let (h, w) = img.dims();
    let mut out = img.clone();
    Fft2Plan::new(h, w).forward(out.data_mut());
    Ok(out)
}

pub fn ifft2_centered<T: Real>(ksp: &ComplexImage<T>) -> Result<ComplexImage<T>> {
    check_finite(ksp)?;
    let (h, w) = ksp.dims();
    let mut out = ksp.clone();
    Fft2Plan::new(h, w).inverse(out.data_mut());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage<f64> {
        let mut rng = RngStream::new(seed, 0);
        ComplexImage::from_fn(h, w, |_, _| Complex::new(rng.normal(), rng.normal())).unwrap()
    }

    fn rel_err(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    /// Direct O(N²) centered DFT used as an oracle.
    fn dft_centered(img: &ComplexImage<f64>) -> Vec<Complex<f64>> {
        let (h, w) = img.dims();
        let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
        let mut out = vec![Complex::new(0.0, 0.0); h * w];
        for ku in 0..h {
            for kv in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let ph = -2.0
                            * std::f64::consts::PI
                            * ((ku as f64 - ch) * (i as f64 - ch) / h as f64
                                + (kv as f64 - cw) * (j as f64 - cw) / w as f64);
                        acc += img.at(i, j) * Complex::from_polar(1.0, ph);
                    }
                }
                out[ku * w + kv] = acc / ((h * w) as f64).sqrt();
            }
        }
        out
    }

    #[test]
    fn constant_maps_to_center_delta() {
        let c = Complex::new(0.7, -0.2);
        let img = ComplexImage::from_fn(16, 12, |_, _| c).unwrap();
        let k = fft2_centered(&img).unwrap();
        let expected = c * (16.0f64 * 12.0).sqrt();
        for i in 0..16 {
            for j in 0..12 {
                let v = k.at(i, j);
                if (i, j) == (8, 6) {
                    assert!((v - expected).norm() < 1e-12);
                } else {
                    assert!(v.norm() < 1e-12, "leak at ({i},{j}): {v}");
                }
            }
        }
    }

    #[test]
    fn center_delta_maps_to_constant() {
        let mut k = ComplexImage::<f64>::zeros(8, 8).unwrap();
        k.data_mut()[4 * 8 + 4] = Complex::new(2.0, 0.0);
        let img = ifft2_centered(&k).unwrap();
        for v in img.data() {
            assert!((v - Complex::new(2.0 / 8.0, 0.0)).norm() < 1e-14);
        }
        let z = ifft2_centered(&ComplexImage::<f64>::zeros(8, 8).unwrap()).unwrap();
        assert!(z.data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn round_trip_and_parseval() {
        for &(h, w) in &[(32, 32), (16, 16), (9, 15), (24, 10)] {
            let x = random_image(h, w, 3);
            let k = fft2_centered(&x).unwrap();
            let back = ifft2_centered(&k).unwrap();
            assert!(rel_err(back.data(), x.data()) < 1e-12);
            let ex = x.energy();
            assert!((k.energy() - ex).abs() / ex < 1e-10);
        }
    }

    #[test]
    fn matches_direct_dft_oracle() {
        for &(h, w) in &[(8, 8), (9, 10)] {
            let x = random_image(h, w, 11);
            let k = fft2_centered(&x).unwrap();
            assert!(rel_err(k.data(), &dft_centered(&x)) < 1e-12);
        }
    }

    #[test]
    fn single_precision_round_trip() {
        let x = random_image(32, 32, 5).cast::<f32>();
        let back = ifft2_centered(&fft2_centered(&x).unwrap()).unwrap();
        let num: f32 = back.data().iter().zip(x.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f32 = x.data().iter().map(|a| a.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-5);
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = ComplexImage::<f64>::zeros(8, 8).unwrap();
        x.data_mut()[3] = Complex::new(f64::NAN, 0.0);
        assert!(matches!(fft2_centered(&x), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn shifts_are_inverse_for_odd_sizes() {
        let mut v: Vec<u32> = (0..35).collect();
        fftshift(&mut v, 5, 7);
        ifftshift(&mut v, 5, 7);
        assert_eq!(v, (0..35).collect::<Vec<_>>());
    }
}
