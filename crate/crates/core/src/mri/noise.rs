use num_complex::Complex;

use crate::error::{Error, Result};
use crate::image::MultiCoilKSpace;
use crate::mri::SamplingMask;
use crate::real::Real;
use crate::rng::RngStream;

/// Highest accepted noise level `N / (N + S)`.
pub const MAX_NOISE_LEVEL: f64 = 0.95;

fn check_mask<T: Real>(y: &MultiCoilKSpace<T>, mask: &SamplingMask) -> Result<()> {
    if mask.dims() != (y.height(), y.width()) {
        return Err(Error::invalid("mask does not match k-space dims"));
    }
    Ok(())
}

/// Mean `|y|²` over acquired samples of every coil.
pub fn signal_power<T: Real>(y: &MultiCoilKSpace<T>, mask: &SamplingMask) -> Result<f64> {
    check_mask(y, mask)?;
    let (mut acc, mut count) = (0.0, 0usize);
    for q in 0..y.coils() {
        for (v, &b) in y.coil(q).iter().zip(mask.bits()) {
            if b {
                acc += v.norm_sqr().as_f64();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid("mask acquires no samples"));
    }
    Ok(acc / count as f64)
}

/// Adds circularly-symmetric complex Gaussian noise to the acquired samples
/// so that the expected noise level `N / (N + S)` equals `nl`.
pub fn inject_noise<T: Real>(
    y: &MultiCoilKSpace<T>,
    mask: &SamplingMask,
    nl: f64,
    rng: &mut RngStream,
) -> Result<MultiCoilKSpace<T>> {
    if !(0.0..=MAX_NOISE_LEVEL).contains(&nl) {
        return Err(Error::invalid(format!(
            "noise level {nl} outside [0, {MAX_NOISE_LEVEL}]"
        )));
    }
    let s = signal_power(y, mask)?;
    let mut out = y.clone();
    if nl == 0.0 {
        return Ok(out);
    }
    let n = nl / (1.0 - nl) * s;
    let sd = (n / 2.0).sqrt();
    for q in 0..out.coils() {
        for (v, &b) in out.coil_mut(q).iter_mut().zip(mask.bits()) {
            if b {
                let (re, im) = (rng.normal() * sd, rng.normal() * sd);
                *v += Complex::new(T::of(re), T::of(im));
            }
        }
    }
    Ok(out)
}

/// Empirical noise level of `noisy` against its clean source.
pub fn noise_level<T: Real>(
    clean: &MultiCoilKSpace<T>,
    noisy: &MultiCoilKSpace<T>,
    mask: &SamplingMask,
) -> Result<f64> {
    if clean.dims() != noisy.dims() {
        return Err(Error::invalid("clean and noisy k-space differ in shape"));
    }
    let s = signal_power(clean, mask)?;
    let (mut acc, mut count) = (0.0, 0usize);
    for q in 0..clean.coils() {
        for ((a, b), &m) in clean.coil(q).iter().zip(noisy.coil(q)).zip(mask.bits()) {
            if m {
                acc += (b - a).norm_sqr().as_f64();
                count += 1;
            }
        }
    }
    let n = acc / count as f64;
    Ok(n / (n + s))
}
