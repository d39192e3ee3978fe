//! Multi-coil encoding `E = M·F·C`, its adjoint, sampling masks, noise
//! injection and the total-variation baseline.

mod encode;
mod mask;
mod maps;
mod noise;
mod tv;

pub use encode::{adjoint_encode, combine_coils, forward_encode, full_kspace, zero_filled, Encoder};
pub use mask::{acs_radius, make_mask, MaskKind, SamplingMask};
pub use maps::SensitivityMaps;
pub use noise::{inject_noise, noise_level, signal_power};
pub use tv::{tv_reconstruct, TvParams, TvResult, TV_SMOOTHING};
