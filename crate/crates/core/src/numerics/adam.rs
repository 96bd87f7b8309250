use serde::{Deserialize, Serialize};

use super::{NumericsError, Parameters, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adam moments for one parameter set.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    /// Fresh state with zero moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn for_params<P: Parameters>(config: AdamConfig, params: &P) -> Self {
        let mut shapes = Vec::new();
        params.visit(&mut |_, t| shapes.push(Tensor::zeros(t.shape())));
        Self {
            config,
            step_count: 0,
            first_moment: shapes.clone(),
            second_moment: shapes,
        }
    }

    /// One bias-corrected Adam update over a parameter set.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<(), NumericsError> {
        let mut grad_list = Vec::new();
        grads.visit(&mut |_, g| grad_list.push(g.clone()));
        if grad_list.len() != self.first_moment.len() {
            return Err(NumericsError::ShapeMismatch {
                expected: vec![self.first_moment.len()],
                found: vec![grad_list.len()],
            });
        }
        let mut mismatch = None;
        let mut idx = 0;
        params.visit(&mut |_, p| {
            if mismatch.is_none() && !(p.same_shape(&grad_list[idx]) && p.same_shape(&self.first_moment[idx])) {
                mismatch = Some(NumericsError::ShapeMismatch {
                    expected: p.shape().to_vec(),
                    found: grad_list[idx].shape().to_vec(),
                });
            }
            idx += 1;
        });
        if let Some(e) = mismatch {
            return Err(e);
        }

        let t = self.step_count + 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t as i32);
        let bc2 = 1.0 - c.beta2.powi(t as i32);
        let (m_all, v_all) = (&mut self.first_moment, &mut self.second_moment);
        let mut idx = 0;
        params.visit_mut(&mut |_, p| {
            update_tensor(
                p,
                &grad_list[idx],
                &mut m_all[idx],
                &mut v_all[idx],
                c.learning_rate,
                c.beta1,
                c.beta2,
                c.epsilon,
                bc1,
                bc2,
            );
            idx += 1;
        });
        self.step_count = t;
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tensor(
    p: &mut Tensor,
    g: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    let pd = p.data_mut();
    let md = m.data_mut();
    let vd = v.data_mut();
    for (i, gi) in g.data().iter().enumerate() {
        md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
        vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
        let m_hat = md[i] / bc1;
        let v_hat = vd[i] / bc2;
        pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam update over parallel slices of parameters and gradients.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
) -> Result<(), NumericsError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(NumericsError::ShapeMismatch {
            expected: vec![params.len()],
            found: vec![grads.len()],
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if !p.same_shape(g) || !p.same_shape(m) {
            return Err(NumericsError::ShapeMismatch {
                expected: p.shape().to_vec(),
                found: g.shape().to_vec(),
            });
        }
    }
    let t = state.step_count + 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(t as i32);
    let bc2 = 1.0 - c.beta2.powi(t as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        update_tensor(
            p,
            g,
            &mut state.first_moment[i],
            &mut state.second_moment[i],
            c.learning_rate,
            c.beta1,
            c.beta2,
            c.epsilon,
            bc1,
            bc2,
        );
    }
    state.step_count = t;
    Ok(())
}
