//! Synthetic tasks, the training loop, and evaluation metrics.

pub mod config;
pub mod metrics;
pub mod optim;
pub mod synthetic;
pub mod train;

pub use config::{CurriculumPhase, RunConfig, TrainSection};
pub use metrics::{auc, metrics, nll, Metrics};
pub use optim::{Adam, AdamConfig};
pub use synthetic::{generate, split_by_user, SyntheticTaskConfig};
pub use train::{evaluate, score_all, train, StepRecord};
