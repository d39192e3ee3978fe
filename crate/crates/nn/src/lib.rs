//! Neural-network layers with hand-written backward passes, the PIDD-GAN
//! generator and discriminators, losses, checkpoints and gradient checks.

pub mod blocks;
pub mod checkpoint;
pub mod conv;
pub mod gan;
pub mod gradcheck;
pub mod layers;
pub mod param;

pub use blocks::{AttentionKind, ChannelAttention, FcaConfig, ResidualBlock};
pub use conv::{Conv2d, ConvTranspose2d};
pub use gan::{Batch, DiscLosses, Discriminator, GanConfig, Generator, GeneratorConfig, LossParts, LossWeights, PiddGan};
pub use layers::{BatchNorm2d, LeakyRelu, Linear, Sigmoid};
pub use param::{Layer, Mode, Param, ParamVisitor};
