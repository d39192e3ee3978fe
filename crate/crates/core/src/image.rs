use num_complex::Complex;

use crate::error::{Error, Result};
use crate::real::Real;

/// Smallest accepted image edge.
pub const MIN_DIM: usize = 8;

/// An `height × width` complex image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage<T> {
    height: usize,
    width: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexImage<T> {
    pub fn new(height: usize, width: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if height < MIN_DIM || width < MIN_DIM {
            return Err(Error::invalid(format!(
                "image dims {height}x{width} below the {MIN_DIM}x{MIN_DIM} minimum"
            )));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "image data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![Complex::new(T::zero(), T::zero()); height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Complex<T>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn at(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.width + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn magnitude(&self) -> Vec<T> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr().as_f64()).sum()
    }

    pub fn cast<U: Real>(&self) -> ComplexImage<U> {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|c| Complex::new(U::of(c.re.as_f64()), U::of(c.im.as_f64())))
                .collect(),
        }
    }
}

/// `coils × height × width` complex array: multi-coil k-space, coil images,
/// or sensitivity profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiCoil<T> {
    coils: usize,
    height: usize,
    width: usize,
    data: Vec<Complex<T>>,
}

/// Multi-coil k-space samples.
pub type MultiCoilKSpace<T> = MultiCoil<T>;

impl<T: Real> MultiCoil<T> {
    pub fn new(coils: usize, height: usize, width: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if coils == 0 {
            return Err(Error::invalid("multi-coil array needs at least one coil"));
        }
        if height < MIN_DIM || width < MIN_DIM {
            return Err(Error::invalid(format!(
                "coil dims {height}x{width} below the {MIN_DIM}x{MIN_DIM} minimum"
            )));
        }
        if data.len() != coils * height * width {
            return Err(Error::invalid(format!(
                "multi-coil data length {} does not match {coils}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            coils,
            height,
            width,
            data,
        })
    }

    pub fn zeros(coils: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(
            coils,
            height,
            width,
            vec![Complex::new(T::zero(), T::zero()); coils * height * width],
        )
    }

    pub fn from_images(images: &[ComplexImage<T>]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::invalid("no coil images given"))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(images.len() * h * w);
        for img in images {
            if img.dims() != (h, w) {
                return Err(Error::invalid("coil images disagree in shape"));
            }
            data.extend_from_slice(img.data());
        }
        Self::new(images.len(), h, w, data)
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.coils, self.height, self.width)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn coil(&self, q: usize) -> &[Complex<T>] {
        let n = self.pixels();
        &self.data[q * n..(q + 1) * n]
    }

    pub fn coil_mut(&mut self, q: usize) -> &mut [Complex<T>] {
        let n = self.pixels();
        &mut self.data[q * n..(q + 1) * n]
    }

    pub fn coil_image(&self, q: usize) -> ComplexImage<T> {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.coil(q).to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn cast<U: Real>(&self) -> MultiCoil<U> {
        MultiCoil {
            coils: self.coils,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|c| Complex::new(U::of(c.re.as_f64()), U::of(c.im.as_f64())))
                .collect(),
        }
    }
}
