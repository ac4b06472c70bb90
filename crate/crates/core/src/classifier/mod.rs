//! Three-branch dilated 1-D CNN over marker clusters, with task preparation,
//! training and evaluation.

mod net;
mod task;
mod train;

pub use net::{Classifier, ClassifierArch, HierarchicalNetSpec, LabeledSet};
pub use task::{prepare_task, split_task, PreparedTask, Task, TaskSpec, TaskSplit};
pub use train::{evaluate, train_classifier, ClassifierTrainConfig, ConfusionMatrix, EpochStats, Evaluation, TrainReport};

use crate::augment::AugmentError;
use crate::dataset::DatasetError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("data error: {0}")]
    Data(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    Numerical { epoch: usize, batch: usize, detail: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("architecture: {0}")]
    Arch(#[from] serde_json::Error),
}
