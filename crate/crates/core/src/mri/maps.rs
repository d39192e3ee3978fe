use num_complex::Complex;

use crate::error::{Error, Result};
use crate::image::MultiCoil;
use crate::real::Real;

/// Coil sensitivity profiles, sum-of-squares normalized on their support:
/// `Σ_q |C^q(p)|² = 1` where the object may live and `0` elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMaps<T> {
    maps: MultiCoil<T>,
}

impl<T: Real> SensitivityMaps<T> {
    /// Wraps maps that already satisfy the normalization, checked to `tol`.
    pub fn new(maps: MultiCoil<T>, tol: f64) -> Result<Self> {
        let s = Self { maps };
        s.check_normalized(tol)?;
        Ok(s)
    }

    /// Normalizes raw profiles so the per-pixel sum of squares is one inside
    /// `support` and zero outside it.
    pub fn normalize(raw: MultiCoil<T>, support: &[bool]) -> Result<Self> {
        let (q, h, w) = raw.dims();
        let n = h * w;
        if support.len() != n {
            return Err(Error::invalid("support size does not match maps"));
        }
        let mut data = raw.into_data();
        for p in 0..n {
            if !support[p] {
                for c in 0..q {
                    data[c * n + p] = Complex::new(T::zero(), T::zero());
                }
                continue;
            }
            let sos: f64 = (0..q).map(|c| data[c * n + p].norm_sqr().as_f64()).sum();
            if sos <= 0.0 {
                return Err(Error::invalid(format!(
                    "all coils vanish at supported pixel {p}"
                )));
            }
            let inv = T::of(1.0 / sos.sqrt());
            for c in 0..q {
                data[c * n + p] = data[c * n + p] * inv;
            }
        }
        Ok(Self {
            maps: MultiCoil::new(q, h, w, data)?,
        })
    }

    /// Single coil with unit sensitivity everywhere.
    pub fn trivial(height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            maps: MultiCoil::new(
                1,
                height,
                width,
                vec![Complex::new(T::one(), T::zero()); height * width],
            )?,
        })
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        for (p, s) in self.sum_of_squares().iter().enumerate() {
            let ok = (s - 1.0).abs() <= tol || s.abs() <= tol;
            if !ok {
                return Err(Error::invalid(format!(
                    "sensitivity sum of squares {s} at pixel {p} is neither 0 nor 1"
                )));
            }
        }
        Ok(())
    }

    /// Per-pixel `Σ_q |C^q|²`.
    pub fn sum_of_squares(&self) -> Vec<f64> {
        let n = self.maps.pixels();
        let mut out = vec![0.0; n];
        for q in 0..self.maps.coils() {
            for (o, c) in out.iter_mut().zip(self.maps.coil(q)) {
                *o += c.norm_sqr().as_f64();
            }
        }
        out
    }

    pub fn support(&self) -> Vec<bool> {
        self.sum_of_squares().into_iter().map(|s| s > 0.5).collect()
    }

    pub fn maps(&self) -> &MultiCoil<T> {
        &self.maps
    }

    pub fn into_inner(self) -> MultiCoil<T> {
        self.maps
    }

    pub fn coils(&self) -> usize {
        self.maps.coils()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.maps.dims()
    }

    pub fn coil(&self, q: usize) -> &[Complex<T>] {
        self.maps.coil(q)
    }

    pub fn cast<U: Real>(&self) -> SensitivityMaps<U> {
        SensitivityMaps {
            maps: self.maps.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_zeroes_outside_support() {
        let raw = MultiCoil::<f64>::new(
            2,
            8,
            8,
            (0..128).map(|v| Complex::new(1.0 + v as f64 * 0.01, 0.3)).collect(),
        )
        .unwrap();
        let support: Vec<bool> = (0..64).map(|p| p % 3 != 0).collect();
        let maps = SensitivityMaps::normalize(raw, &support).unwrap();
        for (p, s) in maps.sum_of_squares().iter().enumerate() {
            let expected = if support[p] { 1.0 } else { 0.0 };
            assert!((s - expected).abs() < 1e-12);
        }
        assert_eq!(maps.support(), support);
    }

    #[test]
    fn unnormalized_maps_rejected() {
        let raw = MultiCoil::<f64>::new(1, 8, 8, vec![Complex::new(0.5, 0.0); 64]).unwrap();
        assert!(SensitivityMaps::new(raw, 1e-6).is_err());
    }
}
