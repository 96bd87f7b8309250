//! Small convolutional and dense layers with hand-written backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{Parameters, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Softplus => {
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative expressed in terms of the pre-activation `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Softplus => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// 3×3 convolution with zero padding 1 over a `[channels, height, width]` map.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

pub const KERNEL: usize = 3;

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, stride: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((in_ch * KERNEL * KERNEL) as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[out_ch, in_ch, KERNEL, KERNEL], bound, rng),
            bias: Tensor::uniform(&[out_ch], bound, rng),
            stride,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_side(&self, side: usize) -> usize {
        (side + 2 - KERNEL) / self.stride + 1
    }

    /// Square input of side `side`; returns the pre-activation map.
    pub fn forward(&self, input: &[f64], side: usize) -> Vec<f64> {
        let (cin, cout, s) = (self.in_channels(), self.out_channels(), self.stride);
        debug_assert_eq!(input.len(), cin * side * side);
        let out_side = self.output_side(side);
        let w = self.weight.data();
        let mut out = vec![0.0; cout * out_side * out_side];
        for o in 0..cout {
            let b = self.bias.data()[o];
            for oy in 0..out_side {
                for ox in 0..out_side {
                    let mut acc = b;
                    for c in 0..cin {
                        let wbase = (o * cin + c) * KERNEL * KERNEL;
                        let ibase = c * side * side;
                        for ky in 0..KERNEL {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy >= side as isize {
                                continue;
                            }
                            for kx in 0..KERNEL {
                                let ix = (ox * s + kx) as isize - 1;
                                if ix < 0 || ix >= side as isize {
                                    continue;
                                }
                                acc += w[wbase + ky * KERNEL + kx]
                                    * input[ibase + iy as usize * side + ix as usize];
                            }
                        }
                    }
                    out[(o * out_side + oy) * out_side + ox] = acc;
                }
            }
        }
        out
    }

    /// Accumulates weight/bias gradients into `grads`; returns the input gradient.
    pub fn backward(
        &self,
        input: &[f64],
        side: usize,
        d_out: &[f64],
        grads: Option<&mut Conv2d>,
    ) -> Vec<f64> {
        let (cin, cout, s) = (self.in_channels(), self.out_channels(), self.stride);
        let out_side = self.output_side(side);
        let w = self.weight.data();
        let mut d_in = vec![0.0; input.len()];
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; cout];
        for o in 0..cout {
            for oy in 0..out_side {
                for ox in 0..out_side {
                    let g = d_out[(o * out_side + oy) * out_side + ox];
                    if g == 0.0 {
                        continue;
                    }
                    db[o] += g;
                    for c in 0..cin {
                        let wbase = (o * cin + c) * KERNEL * KERNEL;
                        let ibase = c * side * side;
                        for ky in 0..KERNEL {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy >= side as isize {
                                continue;
                            }
                            for kx in 0..KERNEL {
                                let ix = (ox * s + kx) as isize - 1;
                                if ix < 0 || ix >= side as isize {
                                    continue;
                                }
                                let ii = ibase + iy as usize * side + ix as usize;
                                let wi = wbase + ky * KERNEL + kx;
                                dw[wi] += g * input[ii];
                                d_in[ii] += g * w[wi];
                            }
                        }
                    }
                }
            }
        }
        if let Some(gr) = grads {
            for (a, b) in gr.weight.data_mut().iter_mut().zip(&dw) {
                *a += b;
            }
            for (a, b) in gr.bias.data_mut().iter_mut().zip(&db) {
                *a += b;
            }
        }
        d_in
    }
}

impl Parameters for Conv2d {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

/// Fully connected layer `y = x·W + b` with `W` stored `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[inputs, outputs], bound, rng),
            bias: Tensor::uniform(&[outputs], bound, rng),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.data().to_vec();
        let m = self.outputs();
        for (i, xi) in x.iter().enumerate() {
            let row = &self.weight.data()[i * m..(i + 1) * m];
            for (yj, wij) in y.iter_mut().zip(row) {
                *yj += xi * wij;
            }
        }
        y
    }

    pub fn backward(&self, x: &[f64], d_out: &[f64], grads: Option<&mut Dense>) -> Vec<f64> {
        let m = self.outputs();
        let d_in = x
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let row = &self.weight.data()[i * m..(i + 1) * m];
                row.iter().zip(d_out).map(|(w, g)| w * g).sum()
            })
            .collect();
        if let Some(gr) = grads {
            for (i, xi) in x.iter().enumerate() {
                let row = &mut gr.weight.data_mut()[i * m..(i + 1) * m];
                for (a, g) in row.iter_mut().zip(d_out) {
                    *a += xi * g;
                }
            }
            for (a, g) in gr.bias.data_mut().iter_mut().zip(d_out) {
                *a += g;
            }
        }
        d_in
    }
}

impl Parameters for Dense {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

pub fn activate(pre: &[f64], act: Activation) -> Vec<f64> {
    pre.iter().map(|&x| act.apply(x)).collect()
}

pub fn activate_backward(pre: &[f64], d_out: &[f64], act: Activation) -> Vec<f64> {
    pre.iter()
        .zip(d_out)
        .map(|(&x, g)| g * act.derivative(x))
        .collect()
}

/// Mean over the spatial axis of a `[channels, area]` map.
pub fn global_average_pool(map: &[f64], channels: usize) -> Vec<f64> {
    let area = map.len() / channels;
    map.chunks_exact(area)
        .map(|c| c.iter().sum::<f64>() / area as f64)
        .collect()
}

pub fn global_average_pool_backward(d_pooled: &[f64], area: usize) -> Vec<f64> {
    d_pooled
        .iter()
        .flat_map(|g| std::iter::repeat_n(g / area as f64, area))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_parameters, finite_diff_grad, rng_from_seed, CheckOptions};

    #[test]
    fn conv_output_sides() {
        let mut rng = rng_from_seed(1);
        assert_eq!(Conv2d::new(1, 2, 2, &mut rng).output_side(32), 16);
        assert_eq!(Conv2d::new(1, 2, 2, &mut rng).output_side(16), 8);
        assert_eq!(Conv2d::new(1, 2, 1, &mut rng).output_side(8), 8);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = rng_from_seed(2);
        let mut conv = Conv2d::new(1, 1, 1, &mut rng);
        conv.weight.fill(0.0);
        conv.weight.data_mut()[4] = 1.0;
        conv.bias.fill(0.0);
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        assert_eq!(conv.forward(&x, 4), x);
    }

    #[test]
    fn conv_and_dense_gradients() {
        for seed in 0..3 {
            let mut rng = rng_from_seed(seed);
            let conv = Conv2d::new(2, 3, 2, &mut rng);
            let dense = Dense::new(3, 2, &mut rng);
            let x = Tensor::uniform(&[2 * 6 * 6], 1.0, &mut rng);
            let act = Activation::Softplus;
            let objective = |c: &Conv2d, d: &Dense, x: &[f64]| {
                let h = activate(&c.forward(x, 6), act);
                let pooled = global_average_pool(&h, 3);
                let y = d.forward(&pooled);
                y[0] * 0.7 - y[1] * y[1]
            };
            // analytic
            let pre = conv.forward(x.data(), 6);
            let h = activate(&pre, act);
            let pooled = global_average_pool(&h, 3);
            let y = dense.forward(&pooled);
            let dy = [0.7, -2.0 * y[1]];
            let mut gd = dense.zeros_like();
            let dpooled = dense.backward(&pooled, &dy, Some(&mut gd));
            let dh = global_average_pool_backward(&dpooled, 9);
            let dpre = activate_backward(&pre, &dh, act);
            let mut gc = conv.zeros_like();
            let dx = conv.backward(x.data(), 6, &dpre, Some(&mut gc));

            let opts = CheckOptions::default();
            let rc = check_parameters(&conv, &gc, |c| objective(c, &dense, x.data()), opts).unwrap();
            let rd = check_parameters(&dense, &gd, |d| objective(&conv, d, x.data()), opts).unwrap();
            for r in rc.iter().chain(&rd) {
                assert!(r.max_rel_error < 1e-6, "{r:?}");
            }
            let fd = finite_diff_grad(|x| objective(&conv, &dense, x.data()), &x, 1e-5).unwrap();
            for (a, n) in dx.iter().zip(fd.data()) {
                assert!((a - n).abs() < 1e-8);
            }
        }
    }
}
