use crate::layers::{
    activate, activate_backward, global_average_pool, global_average_pool_backward, Activation,
    Conv2d, Dense,
};
use crate::numerics::{derive_rng, visit_prefixed, visit_prefixed_mut, Parameters, Tensor};

pub const DISC_CHANNELS: usize = 8;

/// Conv discriminator over the two-channel stack `(candidate, reference)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub head: Dense,
}

#[derive(Clone, Debug)]
pub struct DiscTrace {
    input: Vec<f64>,
    side: usize,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    pooled: Vec<f64>,
    pub score: f64,
}

impl Discriminator {
    pub fn new(seed: u64) -> Self {
        let mut rng = derive_rng(seed, "disc-init", 0);
        Self {
            conv1: Conv2d::new(2, DISC_CHANNELS, 2, &mut rng),
            conv2: Conv2d::new(DISC_CHANNELS, DISC_CHANNELS, 2, &mut rng),
            head: Dense::new(DISC_CHANNELS, 1, &mut rng),
        }
    }

    /// `𝒟(candidate, reference)`.
    pub fn forward(&self, candidate: &[f64], reference: &[f64], side: usize) -> DiscTrace {
        let mut input = Vec::with_capacity(2 * candidate.len());
        input.extend_from_slice(candidate);
        input.extend_from_slice(reference);
        let pre1 = self.conv1.forward(&input, side);
        let act1 = activate(&pre1, Activation::Softplus);
        let s1 = self.conv1.output_side(side);
        let pre2 = self.conv2.forward(&act1, s1);
        let act2 = activate(&pre2, Activation::Softplus);
        let pooled = global_average_pool(&act2, DISC_CHANNELS);
        let score = self.head.forward(&pooled)[0];
        DiscTrace { input, side, pre1, act1, pre2, pooled, score }
    }

    pub fn score(&self, candidate: &[f64], reference: &[f64], side: usize) -> f64 {
        self.forward(candidate, reference, side).score
    }

    /// Backpropagates `d_score`; returns the gradient w.r.t. the candidate
    /// channel and accumulates parameter gradients when `grads` is given.
    pub fn backward(&self, trace: &DiscTrace, d_score: f64, mut grads: Option<&mut Discriminator>) -> Vec<f64> {
        let s1 = self.conv1.output_side(trace.side);
        let s2 = self.conv2.output_side(s1);
        let d_pooled = self
            .head
            .backward(&trace.pooled, &[d_score], grads.as_deref_mut().map(|g| &mut g.head));
        let d_act2 = global_average_pool_backward(&d_pooled, s2 * s2);
        let d_pre2 = activate_backward(&trace.pre2, &d_act2, Activation::Softplus);
        let d_act1 = self.conv2.backward(
            &trace.act1,
            s1,
            &d_pre2,
            grads.as_deref_mut().map(|g| &mut g.conv2),
        );
        let d_pre1 = activate_backward(&trace.pre1, &d_act1, Activation::Softplus);
        let d_input = self.conv1.backward(&trace.input, trace.side, &d_pre1, grads.map(|g| &mut g.conv1));
        d_input[..trace.side * trace.side].to_vec()
    }
}

impl Parameters for Discriminator {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_prefixed(&self.conv1, "disc.conv1", f);
        visit_prefixed(&self.conv2, "disc.conv2", f);
        visit_prefixed(&self.head, "disc.head", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_prefixed_mut(&mut self.conv1, "disc.conv1", f);
        visit_prefixed_mut(&mut self.conv2, "disc.conv2", f);
        visit_prefixed_mut(&mut self.head, "disc.head", f);
    }
}
