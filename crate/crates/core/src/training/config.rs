use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::acc::AccConfig;
use crate::channel::ChannelMode;
use crate::losses::{GanForm, Lambdas};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Finetune,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainChannel {
    Awgn,
    Rayleigh,
    /// Identity link; for autoencoder sanity runs.
    Noiseless,
}

impl TrainChannel {
    pub fn mode(self) -> Option<ChannelMode> {
        match self {
            TrainChannel::Awgn => Some(ChannelMode::Awgn),
            TrainChannel::Rayleigh => Some(ChannelMode::Rayleigh),
            TrainChannel::Noiseless => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub learning_rate: f64,
    pub disc_learning_rate: f64,
    pub batch_size: usize,
    pub mask_ratio: f64,
    pub train_snr_db: f64,
    /// Delays drawn uniformly per batch when computing the symbol budget.
    pub train_delays_s: Vec<f64>,
    pub channel: TrainChannel,
    pub lambdas: Lambdas,
    pub gan_form: GanForm,
    pub mu: f64,
    pub epsilon_th: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::pretrain()
    }
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        let acc = AccConfig::default();
        Self {
            stage: Stage::Pretrain,
            epochs: 200,
            learning_rate: 1e-3,
            disc_learning_rate: 1e-3,
            batch_size: 16,
            mask_ratio: 0.7,
            train_snr_db: 12.0,
            train_delays_s: vec![1e-3, 1e-2],
            channel: TrainChannel::Awgn,
            lambdas: Lambdas::default(),
            gan_form: GanForm::Hinge,
            mu: acc.mu,
            epsilon_th: acc.epsilon_th,
            seed: 0,
        }
    }

    pub fn finetune() -> Self {
        Self {
            stage: Stage::Finetune,
            epochs: 50,
            ..Self::pretrain()
        }
    }

    pub fn acc(&self) -> AccConfig {
        AccConfig {
            mu: self.mu,
            epsilon_th: self.epsilon_th,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return bad("mask_ratio must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.disc_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.train_delays_s.is_empty() || self.train_delays_s.iter().any(|d| !(*d >= 0.0)) {
            return bad("train_delays_s needs at least one non-negative delay");
        }
        self.acc().validate().map_err(|e| TrainError::Config(e.to_string()))
    }
}
