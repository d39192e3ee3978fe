//! Deterministic PIDD-GAN training: configuration, Adam, data preparation,
//! the alternating update loop with early stopping and checkpoints, CSV
//! logs and the residual-learning ablation.

pub mod ablation;
pub mod adam;
pub mod config;
pub mod data;
pub mod log;
pub mod trainer;

pub use ablation::{run_ablation, AblationReport, Variant};
pub use adam::{Adam, AdamConfig};
pub use config::{parse_kv, TrainConfig, TrainMode};
pub use data::{prepare, Prepared, TrainData};
pub use log::{TrainLog, ValMetrics};
pub use trainer::{evaluate_items, reconstruct, train, train_with, TrainOutcome};
