//! Numerical core for parallel-imaging MRI reconstruction experiments.
//!
//! The crate covers everything below the neural network: centered orthonormal
//! FFTs, DCT templates, a reproducible random stream, the `PIDT` tensor
//! container, the multi-coil encoding operator and its adjoint, undersampling
//! masks, noise injection, a total-variation baseline, synthetic phantoms,
//! Sobel edges and the NMSE/PSNR/SSIM metrics.

pub mod container;
pub mod dct;
pub mod edge;
pub mod error;
pub mod fft;
pub mod image;
pub mod metrics;
pub mod mri;
pub mod phantom;
pub mod real;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use image::{ComplexImage, MultiCoil, MultiCoilKSpace};
pub use mri::{MaskKind, SamplingMask, SensitivityMaps};
pub use num_complex::Complex;
pub use real::Real;
pub use rng::RngStream;
pub use tensor::RealTensor;
