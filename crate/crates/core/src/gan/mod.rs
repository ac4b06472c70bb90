//! DCGAN, WGAN-GP and conditional WGAN-GP for fixed-length motion sequences.

mod condition;
mod losses;
mod models;
mod train;

pub use condition::{condition_channels, condition_concat, validate_one_hot, ConditionLabel, COND_CLASSES};
pub use losses::{
    dcgan_loss_values, dcgan_losses, gradient_penalty, gradient_penalty_at, wasserstein_loss_values,
    wasserstein_losses, PROB_CLAMP,
};
pub use models::{generate, noise_vector, Critic, CriticHead, CriticSpec, Generator, GeneratorSpec};
pub use train::{
    detect_stationary, pairwise_distance_stats, train_gan, DistanceStats, DiversityReport, GanData, GanEpochStats,
    GanKind, GanReport, GanTrainSpec, StepRecord, TrainedGan,
};

use crate::dataset::DatasetError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum GanError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Spec(String),
    #[error("non-finite loss at step {step}: {detail}")]
    Numerical { step: usize, detail: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("architecture: {0}")]
    Arch(#[from] serde_json::Error),
}
