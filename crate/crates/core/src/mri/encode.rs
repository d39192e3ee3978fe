use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::Fft2Plan;
use crate::image::{ComplexImage, MultiCoil, MultiCoilKSpace};
use crate::mri::{SamplingMask, SensitivityMaps};
use crate::real::Real;

/// The encoding operator `E = M·F·C` bound to one set of maps and a mask.
pub struct Encoder<'a, T: Real> {
    maps: &'a SensitivityMaps<T>,
    mask: &'a SamplingMask,
    plan: Fft2Plan<T>,
}

impl<'a, T: Real> Encoder<'a, T> {
    pub fn new(maps: &'a SensitivityMaps<T>, mask: &'a SamplingMask) -> Result<Self> {
        let (_, h, w) = maps.dims();
        if mask.dims() != (h, w) {
            return Err(Error::invalid(format!(
                "mask {:?} does not match maps {h}x{w}",
                mask.dims()
            )));
        }
        Ok(Self {
            maps,
            mask,
            plan: Fft2Plan::new(h, w),
        })
    }

    pub fn maps(&self) -> &SensitivityMaps<T> {
        self.maps
    }

    pub fn mask(&self) -> &SamplingMask {
        self.mask
    }

    pub fn plan(&self) -> &Fft2Plan<T> {
        &self.plan
    }

    fn check_image(&self, x: &ComplexImage<T>) -> Result<()> {
        let (_, h, w) = self.maps.dims();
        if x.dims() != (h, w) {
            return Err(Error::invalid(format!(
                "image {:?} does not match maps {h}x{w}",
                x.dims()
            )));
        }
        Ok(())
    }

    fn check_kspace(&self, y: &MultiCoilKSpace<T>) -> Result<()> {
        if y.dims() != self.maps.dims() {
            return Err(Error::invalid(format!(
                "k-space {:?} does not match maps {:?}",
                y.dims(),
                self.maps.dims()
            )));
        }
        Ok(())
    }

    /// `y^q = M ⊙ F(C^q ⊙ x)`.
    pub fn forward(&self, x: &ComplexImage<T>) -> Result<MultiCoilKSpace<T>> {
        self.check_image(x)?;
        let (q, h, w) = self.maps.dims();
        let mut out = MultiCoil::zeros(q, h, w)?;
        for c in 0..q {
            let buf = out.coil_mut(c);
            for ((o, s), v) in buf.iter_mut().zip(self.maps.coil(c)).zip(x.data()) {
                *o = s * v;
            }
            self.plan.forward(buf);
            apply_mask(buf, self.mask.bits());
        }
        Ok(out)
    }

    /// `Σ_q conj(C^q) ⊙ F⁻¹(M ⊙ y^q)`.
    pub fn adjoint(&self, y: &MultiCoilKSpace<T>) -> Result<ComplexImage<T>> {
        self.check_kspace(y)?;
        let (q, h, w) = self.maps.dims();
        let mut acc = vec![Complex::new(T::zero(), T::zero()); h * w];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
        for c in 0..q {
            buf.copy_from_slice(y.coil(c));
            apply_mask(&mut buf, self.mask.bits());
            self.plan.inverse(&mut buf);
            for ((a, s), v) in acc.iter_mut().zip(self.maps.coil(c)).zip(&buf) {
                *a += s.conj() * v;
            }
        }
        ComplexImage::new(h, w, acc)
    }

    /// Normal operator `Eᴴ E x`.
    pub fn normal(&self, x: &ComplexImage<T>) -> Result<ComplexImage<T>> {
        self.adjoint(&self.forward(x)?)
    }
}

fn apply_mask<T: Real>(buf: &mut [Complex<T>], bits: &[bool]) {
    for (v, &b) in buf.iter_mut().zip(bits) {
        if !b {
            *v = Complex::new(T::zero(), T::zero());
        }
    }
}

pub fn forward_encode<T: Real>(
    x: &ComplexImage<T>,
    maps: &SensitivityMaps<T>,
    mask: &SamplingMask,
) -> Result<MultiCoilKSpace<T>> {
    Encoder::new(maps, mask)?.forward(x)
}

pub fn adjoint_encode<T: Real>(
    y: &MultiCoilKSpace<T>,
    maps: &SensitivityMaps<T>,
    mask: &SamplingMask,
) -> Result<ComplexImage<T>> {
    Encoder::new(maps, mask)?.adjoint(y)
}

/// Sensitivity-weighted zero-filled image `x_u = Eᴴ y`.
pub fn zero_filled<T: Real>(
    y: &MultiCoilKSpace<T>,
    maps: &SensitivityMaps<T>,
    mask: &SamplingMask,
) -> Result<ComplexImage<T>> {
    adjoint_encode(y, maps, mask)
}

/// Unmasked per-coil k-space `F(x^q)` of coil images.
pub fn full_kspace<T: Real>(coil_images: &MultiCoil<T>) -> Result<MultiCoilKSpace<T>> {
    let (q, h, w) = coil_images.dims();
    let plan = Fft2Plan::new(h, w);
    let mut out = coil_images.clone();
    for c in 0..q {
        plan.forward(out.coil_mut(c));
    }
    Ok(out)
}

/// Sensitivity-weighted combination `Σ_q conj(C^q) ⊙ x^q` of coil images.
pub fn combine_coils<T: Real>(
    coil_images: &MultiCoil<T>,
    maps: &SensitivityMaps<T>,
) -> Result<ComplexImage<T>> {
    if coil_images.dims() != maps.dims() {
        return Err(Error::invalid(format!(
            "coil images {:?} do not match maps {:?}",
            coil_images.dims(),
            maps.dims()
        )));
    }
    let (q, h, w) = maps.dims();
    let mut acc = vec![Complex::new(T::zero(), T::zero()); h * w];
    for c in 0..q {
        for ((a, s), v) in acc.iter_mut().zip(maps.coil(c)).zip(coil_images.coil(c)) {
            *a += s.conj() * v;
        }
    }
    ComplexImage::new(h, w, acc)
}
