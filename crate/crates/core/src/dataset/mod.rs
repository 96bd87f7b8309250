//! Synthetic labeled image corpus and the frozen downstream task model.

mod corpus;
mod io;
mod task_model;

pub use corpus::{generate_corpus, Corpus, LabeledImage, ShapeKind, IMAGE_SIDE, PATCH_SIDE, SHAPES};
pub use io::{export_corpus, import_corpus, CorpusHeader, LabelRecord, CORPUS_FORMAT};
pub use task_model::{
    argmax, fit_task_model, task_accuracy, train_task_model, TaskForward, TaskModel,
    TaskTrainConfig, TrainedTaskModel, CONV1_CHANNELS, FEATURE_MAPS,
};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid corpus configuration: {0}")]
    Config(String),
    #[error("empty image set")]
    Empty,
    #[error(
        "task model reached {reached:.3} held-out accuracy after {epochs} epochs (target {target:.2}); \
         use a larger corpus or more epochs"
    )]
    AccuracyNotReached {
        reached: f64,
        target: f64,
        epochs: usize,
    },
    #[error("corpus format: {0}")]
    Format(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
