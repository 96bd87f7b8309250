//! Semantic sampling: gradient-weighted map (task saliency), content-weighted
//! map (patch entropy), their combination and threshold masking.

use serde::{Deserialize, Serialize};

use super::AccError;
use crate::dataset::{argmax, TaskModel};
use crate::numerics::softmax;

/// Per-patch weights produced by semantic sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub gamma: Vec<f64>,
    /// Gradient-weighted map after range normalization.
    pub gamma_g: Vec<f64>,
    /// Content-weighted map (softmax over entropies, sums to 1).
    pub gamma_c: Vec<f64>,
    pub entropies: Vec<f64>,
    pub mu: f64,
    pub epsilon_th: f64,
}

/// `ReLU(Σ_t α_t A_t)` with `α_t` the spatial mean of `∂y/∂A_t`, resampled
/// (nearest neighbour) to a `grid × grid` patch layout and divided by its
/// maximum. An all-zero map stays all-zero.
///
/// `maps` and `gradients` are `[T, side, side]`.
pub fn weighted_activation_map(
    maps: &[f64],
    gradients: &[f64],
    map_count: usize,
    side: usize,
    grid: usize,
) -> Vec<f64> {
    let area = side * side;
    debug_assert_eq!(maps.len(), map_count * area);
    let alphas: Vec<f64> = gradients
        .chunks_exact(area)
        .map(|g| g.iter().sum::<f64>() / area as f64)
        .collect();
    let mut cam = vec![0.0; area];
    for (alpha, map) in alphas.iter().zip(maps.chunks_exact(area)) {
        for (c, a) in cam.iter_mut().zip(map) {
            *c += alpha * a;
        }
    }
    cam.iter_mut().for_each(|c| *c = c.max(0.0));
    let mut out: Vec<f64> = (0..grid * grid)
        .map(|p| {
            let (r, c) = (p / grid, p % grid);
            cam[(r * side / grid) * side + c * side / grid]
        })
        .collect();
    let max = out.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        out.iter_mut().for_each(|v| *v /= max);
    }
    out
}

/// Grad-CAM of the model's predicted class over the patch grid.
pub fn grad_weighted_map(image: &[f64], model: &TaskModel, grid: usize) -> Vec<f64> {
    let fwd = model.forward(image);
    let class = argmax(&fwd.logits);
    let mut onehot = vec![0.0; fwd.logits.len()];
    onehot[class] = 1.0;
    let d_maps = model.backward(&fwd, &onehot, None);
    weighted_activation_map(
        &fwd.feature_maps,
        &d_maps,
        model.feature_map_count(),
        model.feature_side(),
        grid,
    )
}

pub const ENTROPY_BINS: usize = 32;

/// Plug-in Shannon entropy (nats) of a 32-bin histogram over `[0, 1]`.
pub fn patch_entropy(patch: &[f64]) -> f64 {
    let mut counts = [0usize; ENTROPY_BINS];
    for v in patch {
        let b = ((v.clamp(0.0, 1.0) * ENTROPY_BINS as f64) as usize).min(ENTROPY_BINS - 1);
        counts[b] += 1;
    }
    let n = patch.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `(γ^c, ε)`: softmax over per-patch entropies, and the entropies.
pub fn content_weighted_map<'a, I>(patches: I) -> (Vec<f64>, Vec<f64>)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let entropies: Vec<f64> = patches.into_iter().map(patch_entropy).collect();
    (softmax(&entropies), entropies)
}

/// Min-max scaling to `[0, 1]`. A constant vector maps to all zeros.
pub fn range_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if span > 1e-15 * max.abs().max(1.0) {
        values.iter().map(|v| (v - min) / span).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// `γ = μ·γ^g + (1 − μ)·γ^c`.
pub fn combine_weights(gamma_g: &[f64], gamma_c: &[f64], mu: f64) -> Result<Vec<f64>, AccError> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(AccError::InvalidTradeoff(mu));
    }
    if gamma_g.len() != gamma_c.len() {
        return Err(AccError::LengthMismatch(gamma_g.len(), gamma_c.len()));
    }
    Ok(gamma_g
        .iter()
        .zip(gamma_c)
        .map(|(g, c)| g * mu + c * (1.0 - mu))
        .collect())
}

fn argmax_lowest(gamma: &[f64]) -> usize {
    let mut best = 0;
    for (i, g) in gamma.iter().enumerate() {
        if *g > gamma[best] {
            best = i;
        }
    }
    best
}

/// Retain `{m : γ_m ≥ ε_th}`; if nothing passes, keep the argmax alone.
pub fn mask_select(gamma: &[f64], epsilon_th: f64) -> Vec<usize> {
    let kept: Vec<usize> = (0..gamma.len()).filter(|&m| gamma[m] >= epsilon_th).collect();
    if kept.is_empty() && !gamma.is_empty() {
        vec![argmax_lowest(gamma)]
    } else {
        kept
    }
}

/// Bisection form of the masking scheme.
///
/// Weights are visited in ascending order; a binary search locates the
/// boundary between features below `ε_th` (removed) and the rest. Same
/// retained set as [`mask_select`].
pub fn mask_select_bisection(gamma: &[f64], epsilon_th: f64) -> Vec<usize> {
    if gamma.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..gamma.len()).collect();
    order.sort_by(|&a, &b| gamma[a].total_cmp(&gamma[b]).then(a.cmp(&b)));
    let (mut low, mut high) = (0usize, order.len());
    while low < high {
        let mid = (low + high) / 2;
        if gamma[order[mid]] < epsilon_th {
            low = mid + 1;
        } else {
            high = mid;
        }
    }
    if low == order.len() {
        return vec![argmax_lowest(gamma)];
    }
    let mut kept = order[low..].to_vec();
    kept.sort_unstable();
    kept
}
