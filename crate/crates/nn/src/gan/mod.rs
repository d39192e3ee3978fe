//! Generator, discriminators, losses and the per-batch training passes.

pub mod discriminator;
pub mod generator;
pub mod loss;
pub mod model;
pub mod perceptual;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig};
pub use loss::{loss_total, LossParts, LossWeights};
pub use model::{Batch, DiscLosses, GanConfig, PiddGan};
pub use perceptual::PerceptualNet;
