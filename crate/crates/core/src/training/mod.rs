//! Two-stage training: random-mask pre-training of the codec, then
//! fine-tuning with the controller's weights and rates in the loop.

mod config;
mod engine;

pub use config::{Stage, TrainChannel, TrainConfig};
pub use engine::{
    finetune_stage2, init_seeds, moving_average, pretrain_stage1, random_mask_weights,
    write_loss_log,
    EpochLog, EpochObserver, TrainOutcome,
};

use thiserror::Error;

use crate::acc::AccError;
use crate::gjscc::GjsccError;
use crate::losses::LossError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("every frame of epoch {epoch}, batch {batch} was lost to deep fades")]
    AllFramesLost { epoch: usize, batch: usize },
    #[error(transparent)]
    Codec(#[from] GjsccError),
    #[error(transparent)]
    Acc(#[from] AccError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("observer failed: {0}")]
    Observer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
