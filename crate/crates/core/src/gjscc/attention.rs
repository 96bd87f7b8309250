//! Single-head scaled dot-product self-attention with a residual connection:
//! `y = x + softmax(x Wq (x Wk)ᵀ / √d) (x Wv) Wo`.

use rand::Rng;

use crate::numerics::{matmul, matmul_nt, matmul_tn, softmax, Parameters, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
}

impl AttentionParams {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        Self {
            wq: Tensor::uniform(&[dim, dim], s, rng),
            wk: Tensor::uniform(&[dim, dim], s, rng),
            wv: Tensor::uniform(&[dim, dim], s, rng),
            wo: Tensor::uniform(&[dim, dim], s, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.shape()[0]
    }
}

impl Parameters for AttentionParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("wq", &self.wq);
        f("wk", &self.wk);
        f("wv", &self.wv);
        f("wo", &self.wo);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("wq", &mut self.wq);
        f("wk", &mut self.wk);
        f("wv", &mut self.wv);
        f("wo", &mut self.wo);
    }
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    pub tokens: usize,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Row-stochastic attention weights, `tokens × tokens`.
    pub probs: Vec<f64>,
    z: Vec<f64>,
}

/// `x` holds `tokens` rows of `dim` values.
pub fn attention_block(p: &AttentionParams, x: &[f64], tokens: usize) -> (Vec<f64>, AttentionCache) {
    let d = p.dim();
    debug_assert_eq!(x.len(), tokens * d);
    let q = matmul(x, p.wq.data(), tokens, d, d);
    let k = matmul(x, p.wk.data(), tokens, d, d);
    let v = matmul(x, p.wv.data(), tokens, d, d);
    let scale = 1.0 / (d as f64).sqrt();
    let mut scores = matmul_nt(&q, &k, tokens, d, tokens);
    scores.iter_mut().for_each(|s| *s *= scale);
    let probs: Vec<f64> = scores
        .chunks_exact(tokens)
        .flat_map(softmax)
        .collect();
    let z = matmul(&probs, &v, tokens, tokens, d);
    let mut y = matmul(&z, p.wo.data(), tokens, d, d);
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
    (
        y,
        AttentionCache {
            tokens,
            x: x.to_vec(),
            q,
            k,
            v,
            probs,
            z,
        },
    )
}

/// Accumulates parameter gradients into `grads` and returns `∂L/∂x`.
pub fn attention_backward(
    p: &AttentionParams,
    cache: &AttentionCache,
    dy: &[f64],
    grads: &mut AttentionParams,
) -> Vec<f64> {
    let d = p.dim();
    let n = cache.tokens;
    let scale = 1.0 / (d as f64).sqrt();

    accumulate(&mut grads.wo, &matmul_tn(&cache.z, dy, n, d, d));
    let dz = matmul_nt(dy, p.wo.data(), n, d, d);
    let dprobs = matmul_nt(&dz, &cache.v, n, d, n);
    let dv = matmul_tn(&cache.probs, &dz, n, n, d);

    let mut dscores = vec![0.0; n * n];
    for i in 0..n {
        let pr = &cache.probs[i * n..(i + 1) * n];
        let dp = &dprobs[i * n..(i + 1) * n];
        let dot: f64 = pr.iter().zip(dp).map(|(a, b)| a * b).sum();
        for j in 0..n {
            dscores[i * n + j] = pr[j] * (dp[j] - dot) * scale;
        }
    }
    let dq = matmul(&dscores, &cache.k, n, n, d);
    let dk = matmul_tn(&dscores, &cache.q, n, n, d);

    accumulate(&mut grads.wq, &matmul_tn(&cache.x, &dq, n, d, d));
    accumulate(&mut grads.wk, &matmul_tn(&cache.x, &dk, n, d, d));
    accumulate(&mut grads.wv, &matmul_tn(&cache.x, &dv, n, d, d));

    let mut dx = dy.to_vec();
    for (g, w) in [(&dq, &p.wq), (&dk, &p.wk), (&dv, &p.wv)] {
        let part = matmul_nt(g, w.data(), n, d, d);
        for (a, b) in dx.iter_mut().zip(&part) {
            *a += b;
        }
    }
    dx
}

fn accumulate(t: &mut Tensor, g: &[f64]) {
    for (a, b) in t.data_mut().iter_mut().zip(g) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_parameters, finite_diff_grad, rng_from_seed, CheckOptions};

    #[test]
    fn zero_weights_are_identity() {
        let mut rng = rng_from_seed(0);
        let mut p = AttentionParams::new(4, &mut rng);
        p.visit_mut(&mut |_, t| t.fill(0.0));
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.3 - 1.0).collect();
        let (y, _) = attention_block(&p, &x, 3);
        assert_eq!(y, x);
    }

    #[test]
    fn single_token_closed_form() {
        // One token: softmax weight is 1, so y = x + (x Wv) Wo.
        let mut rng = rng_from_seed(1);
        let p = AttentionParams::new(3, &mut rng);
        let x = [0.2, -0.7, 1.1];
        let (y, cache) = attention_block(&p, &x, 1);
        assert_eq!(cache.probs, vec![1.0]);
        let (wv, wo) = (p.wv.data(), p.wo.data());
        for j in 0..3 {
            let mut expected = x[j];
            for a in 0..3 {
                let v_a: f64 = (0..3).map(|i| x[i] * wv[i * 3 + a]).sum();
                expected += v_a * wo[a * 3 + j];
            }
            assert!((y[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn permutation_equivariant() {
        let mut rng = rng_from_seed(2);
        let p = AttentionParams::new(4, &mut rng);
        let x = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        let (y, _) = attention_block(&p, x.data(), 3);
        let perm = [2usize, 0, 1];
        let xp: Vec<f64> = perm.iter().flat_map(|&i| x.row(i).to_vec()).collect();
        let (yp, _) = attention_block(&p, &xp, 3);
        for (r, &src) in perm.iter().enumerate() {
            for j in 0..4 {
                assert!((yp[r * 4 + j] - y[src * 4 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10 {
            let mut rng = rng_from_seed(seed);
            let p = AttentionParams::new(5, &mut rng);
            let n = 1 + (seed as usize % 4);
            let x = Tensor::uniform(&[n, 5], 1.0, &mut rng);
            let w = Tensor::uniform(&[n, 5], 1.0, &mut rng);
            let obj = |p: &AttentionParams, x: &[f64]| -> f64 {
                let (y, _) = attention_block(p, x, n);
                y.iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
                    + 0.1 * y.iter().map(|a| a * a).sum::<f64>()
            };
            let (y, cache) = attention_block(&p, x.data(), n);
            let dy: Vec<f64> = y.iter().zip(w.data()).map(|(a, b)| b + 0.2 * a).collect();
            let mut g = p.zeros_like();
            let dx = attention_backward(&p, &cache, &dy, &mut g);
            let reports = check_parameters(
                &p,
                &g,
                |pp| obj(pp, x.data()),
                CheckOptions { seed, ..Default::default() },
            )
            .unwrap();
            for r in reports {
                assert!(r.max_rel_error < 1e-4, "{r:?}");
            }
            let fd = finite_diff_grad(|xx| obj(&p, xx.data()), &x, 1e-5).unwrap();
            for (a, b) in dx.iter().zip(fd.data()) {
                assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-3));
            }
        }
    }
}
