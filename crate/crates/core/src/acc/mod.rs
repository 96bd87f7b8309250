//! Adaptive coding controller.
//!
//! For each image the controller weights the patches by task saliency and
//! content entropy, masks those below a threshold, then assigns each
//! surviving token one of three embedding widths under the symbol budget
//! implied by the channel state and the delay.

mod link;
mod rate;
mod sampling;

pub use link::{
    compute_capacity, compute_l_max, compute_symbol_rate, image_budget, LinkConfig,
    REFERENCE_BANDWIDTH_HZ, REFERENCE_CONSTELLATION_BITS, REFERENCE_DELAY_S,
};
pub use rate::{allocate_rates, allocate_with_masking, allocation_is_valid, RateAllocation};
pub use sampling::{
    combine_weights, content_weighted_map, grad_weighted_map, mask_select, mask_select_bisection,
    patch_entropy, range_normalize, weighted_activation_map, FeatureWeights, ENTROPY_BINS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TaskModel;
use crate::gjscc::{patchify, CodecDims, GjsccError};

#[derive(Debug, Error, PartialEq)]
pub enum AccError {
    #[error("tradeoff μ = {0} outside [0, 1]")]
    InvalidTradeoff(f64),
    #[error("masking threshold {0} must be positive")]
    InvalidThreshold(f64),
    #[error("weight vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid link configuration: {0}")]
    InvalidLink(String),
    #[error("token dimension {0} must be a positive multiple of 8")]
    InvalidTokenDim(usize),
    #[error("no tokens to allocate")]
    EmptyAllocation,
    #[error("minimum total width {required} exceeds budget {budget}")]
    InsufficientBudget { required: u64, budget: u64 },
    #[error("budget {budget} cannot carry a single token of width {min_token}")]
    NothingFits { budget: u64, min_token: usize },
    #[error(transparent)]
    Codec(#[from] GjsccError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccConfig {
    pub mu: f64,
    pub epsilon_th: f64,
}

impl Default for AccConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            epsilon_th: 0.1,
        }
    }
}

impl AccConfig {
    pub fn validate(&self) -> Result<(), AccError> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(AccError::InvalidTradeoff(self.mu));
        }
        if !(self.epsilon_th > 0.0) {
            return Err(AccError::InvalidThreshold(self.epsilon_th));
        }
        Ok(())
    }
}

/// Everything the controller decided for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct AccDecision {
    pub weights: FeatureWeights,
    /// Retained patch indices, ascending.
    pub retained: Vec<usize>,
    /// Width per retained token, aligned with `retained`.
    pub allocation: RateAllocation,
    /// Tokens masked beyond the threshold to fit the budget.
    pub dropped_for_budget: usize,
    pub snr_db: f64,
}

/// Per-image decision as exported to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccRecord {
    pub gamma: Vec<f64>,
    pub retained: Vec<usize>,
    pub delta: Vec<usize>,
    #[serde(rename = "L_max")]
    pub l_max: u64,
    pub snr_db: f64,
    pub mu: f64,
    pub epsilon_th: f64,
}

impl AccDecision {
    pub fn record(&self) -> AccRecord {
        AccRecord {
            gamma: self.weights.gamma.clone(),
            retained: self.retained.clone(),
            delta: self.allocation.delta.clone(),
            l_max: self.allocation.l_max,
            snr_db: self.snr_db,
            mu: self.weights.mu,
            epsilon_th: self.weights.epsilon_th,
        }
    }

    /// Real channel symbols per image pixel.
    pub fn bandwidth_ratio(&self, pixels: usize) -> f64 {
        self.allocation.sum_delta as f64 / pixels as f64
    }
}

/// Semantic sampling for one image: normalized saliency and content maps and
/// their combination.
pub fn feature_weights(
    image: &[f64],
    model: &TaskModel,
    dims: &CodecDims,
    config: &AccConfig,
) -> Result<FeatureWeights, AccError> {
    config.validate()?;
    dims.validate()?;
    let grid = patchify(image, dims.patch_side)?;
    let side = dims.image_side / dims.patch_side;
    let gamma_g = range_normalize(&grad_weighted_map(image, model, side));
    let (content, entropies) = content_weighted_map((0..grid.patch_count).map(|m| grid.patch(m)));
    let gamma_c = range_normalize(&content);
    let gamma = combine_weights(&gamma_g, &gamma_c, config.mu)?;
    Ok(FeatureWeights {
        gamma,
        gamma_g,
        gamma_c,
        entropies,
        mu: config.mu,
        epsilon_th: config.epsilon_th,
    })
}

/// Full controller decision: weights, masking, then rate allocation under
/// the per-image budget of `link`.
pub fn decide(
    image: &[f64],
    model: &TaskModel,
    link: &LinkConfig,
    dims: &CodecDims,
    config: &AccConfig,
) -> Result<AccDecision, AccError> {
    link.validate()?;
    let weights = feature_weights(image, model, dims, config)?;
    let masked = mask_select(&weights.gamma, config.epsilon_th);
    let budget = image_budget(link);
    let (retained, allocation, dropped_for_budget) =
        allocate_with_masking(&weights.gamma, &masked, dims.token_dim, budget)?;
    Ok(AccDecision {
        weights,
        retained,
        allocation,
        dropped_for_budget,
        snr_db: link.snr_db(),
    })
}
