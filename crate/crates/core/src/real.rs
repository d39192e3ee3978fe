//! Floating-point scalar abstraction shared by every numeric path.
//!
//! Verification paths run in `f64`, training paths in `f32`; every routine in
//! the workspace is generic over [`Real`] so the precision is chosen per call.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, NumAssign};
use rustfft::FftNum;

use crate::container::TensorData;

pub trait Real:
    Float + NumAssign + FftNum + Default + Display + Debug + Sum + Send + Sync + 'static
{
    /// Container dtype code for real tensors of this precision.
    const REAL_DTYPE: u8;
    /// Container dtype code for complex tensors of this precision.
    const COMPLEX_DTYPE: u8;

    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;

    fn wrap_real(data: Vec<Self>) -> TensorData;
    fn unwrap_real(data: TensorData) -> Option<Vec<Self>>;
    fn wrap_complex(data: Vec<Complex<Self>>) -> TensorData;
    fn unwrap_complex(data: TensorData) -> Option<Vec<Complex<Self>>>;

    /// Raw strided matrix product `C = alpha * A * B + beta * C`.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m×k`, `k×n` and `m×n`
    /// matrices; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const REAL_DTYPE: u8 = 0;
    const COMPLEX_DTYPE: u8 = 2;

    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn wrap_real(data: Vec<Self>) -> TensorData {
        TensorData::F32(data)
    }
    fn unwrap_real(data: TensorData) -> Option<Vec<Self>> {
        match data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }
    fn wrap_complex(data: Vec<Complex<Self>>) -> TensorData {
        TensorData::C64(data)
    }
    fn unwrap_complex(data: TensorData) -> Option<Vec<Complex<Self>>> {
        match data {
            TensorData::C64(v) => Some(v),
            _ => None,
        }
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    const REAL_DTYPE: u8 = 1;
    const COMPLEX_DTYPE: u8 = 3;

    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn wrap_real(data: Vec<Self>) -> TensorData {
        TensorData::F64(data)
    }
    fn unwrap_real(data: TensorData) -> Option<Vec<Self>> {
        match data {
            TensorData::F64(v) => Some(v),
            _ => None,
        }
    }
    fn wrap_complex(data: Vec<Complex<Self>>) -> TensorData {
        TensorData::C128(data)
    }
    fn unwrap_complex(data: TensorData) -> Option<Vec<Complex<Self>>> {
        match data {
            TensorData::C128(v) => Some(v),
            _ => None,
        }
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix operand, optionally transposed.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, T> MatRef<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = a · b + beta · out` for row-major operands; `out` is `m×n` row-major.
///
/// Panics on shape mismatch; callers validate shapes at their own boundary.
pub fn gemm<T: Real>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, out: &mut [T]) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "gemm inner dimension mismatch");
    assert_eq!(a.data.len(), a.rows * a.cols);
    assert_eq!(b.data.len(), b.rows * b.cols);
    assert_eq!(out.len(), m * n, "gemm output size mismatch");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: shapes and lengths asserted above; `out` is a distinct &mut.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
