use serde::{Deserialize, Serialize};

use crate::layers::{activate, activate_backward, Activation, Conv2d};
use crate::numerics::derive_rng;

pub const PHI_CHANNELS: [usize; 2] = [4, 8];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Two frozen random convolutions with tanh.
    RandomConv,
    /// `φ(x) = x`; reduces the feature loss to squared pixel distance.
    Identity,
}

/// Frozen loss network `φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureNet {
    conv1: Conv2d,
    conv2: Conv2d,
    mode: FeatureMode,
    seed: u64,
}

struct PhiTrace {
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    out: Vec<f64>,
}

impl FeatureNet {
    pub fn new(seed: u64, mode: FeatureMode) -> Self {
        let mut rng = derive_rng(seed, "phi-init", 0);
        Self {
            conv1: Conv2d::new(1, PHI_CHANNELS[0], 1, &mut rng),
            conv2: Conv2d::new(PHI_CHANNELS[0], PHI_CHANNELS[1], 2, &mut rng),
            mode,
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn layers(&self) -> (&Conv2d, &Conv2d) {
        (&self.conv1, &self.conv2)
    }

    fn trace(&self, image: &[f64], side: usize) -> PhiTrace {
        let pre1 = self.conv1.forward(image, side);
        let act1 = activate(&pre1, Activation::Tanh);
        let pre2 = self.conv2.forward(&act1, side);
        let out = activate(&pre2, Activation::Tanh);
        PhiTrace { pre1, act1, pre2, out }
    }

    /// Feature vector of a square single-channel image.
    pub fn features(&self, image: &[f64], side: usize) -> Vec<f64> {
        match self.mode {
            FeatureMode::Identity => image.to_vec(),
            FeatureMode::RandomConv => self.trace(image, side).out,
        }
    }

    /// `‖φ(a) − φ(b)‖²` and its gradient w.r.t. `b`.
    pub fn distance_with_grad(&self, a: &[f64], b: &[f64], side: usize) -> (f64, Vec<f64>) {
        match self.mode {
            FeatureMode::Identity => {
                let loss = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                (loss, b.iter().zip(a).map(|(y, x)| 2.0 * (y - x)).collect())
            }
            FeatureMode::RandomConv => {
                let fa = self.features(a, side);
                let tb = self.trace(b, side);
                let loss = fa.iter().zip(&tb.out).map(|(x, y)| (x - y).powi(2)).sum();
                let d_out: Vec<f64> = tb.out.iter().zip(&fa).map(|(y, x)| 2.0 * (y - x)).collect();
                let d_pre2 = activate_backward(&tb.pre2, &d_out, Activation::Tanh);
                let d_act1 = self.conv2.backward(&tb.act1, side, &d_pre2, None);
                let d_pre1 = activate_backward(&tb.pre1, &d_act1, Activation::Tanh);
                let d_in = self.conv1.backward(b, side, &d_pre1, None);
                (loss, d_in)
            }
        }
    }
}
