//! Training, evaluation, checkpoints and ablations.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod train;

pub use ablate::{run_ablation, AblationGrid, AblationReport};
pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use metrics::{evaluate, Metrics, Summary};
pub use train::{train, train_on, TrainData, TrainReport};
