//! Dense arithmetic, seeded randomness, Adam, finite differences and
//! checkpoint I/O shared by every trainable block.

mod adam;
mod checkpoint;
mod format;
mod gradcheck;
mod params;
mod rng;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint_into, read_checkpoint, save_checkpoint, CheckpointManifest, ManifestEntry,
    CHECKPOINT_FORMAT,
};
pub use format::fmt_sig6;
pub use gradcheck::{
    check_parameters, compensated_sum, finite_diff_grad, relative_error, CheckOptions, TensorCheck,
};
pub use params::{visit_prefixed, visit_prefixed_mut, NamedTensors, Parameters};
pub use rng::{derive_rng, derive_seed, rng_from_seed, SimRng};
pub use tensor::{add_into, matmul, matmul_nt, matmul_tn, softmax, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("objective is not finite at coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
