//! Central finite differences and analytic-vs-numeric gradient comparison.

use rand::seq::index::sample;
use serde::Serialize;

use super::{rng_from_seed, NumericsError, Parameters, Tensor};

/// Per-coordinate central difference `(f(x + h·e_i) − f(x − h·e_i)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor, NumericsError>
where
    F: FnMut(&Tensor) -> f64,
{
    if !(h > 0.0) {
        return Err(NumericsError::InvalidStep(h));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumericsError::NonFinite { coordinate: i });
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Relative error used by every gradient check in the crate.
///
/// The denominator is `max(|analytic|, |numeric|, floor)` where `floor` is
/// 1e-3 of the largest analytic magnitude in the same tensor (and never below
/// 1e-10), so coordinates whose true gradient is numerically zero are judged
/// on the tensor's scale rather than their own.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor).max(1e-10);
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub max_rel_error: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    pub step: f64,
    /// Coordinates sampled per tensor; tensors at or below this size are checked exhaustively.
    pub max_coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords_per_tensor: 24,
            seed: 0,
        }
    }
}

/// Compare `analytic` against central differences of `objective` at `params`.
pub fn check_parameters<P, F>(
    params: &P,
    analytic: &P,
    mut objective: F,
    opts: CheckOptions,
) -> Result<Vec<TensorCheck>, NumericsError>
where
    P: Parameters,
    F: FnMut(&P) -> f64,
{
    let analytic_list = analytic.tensors();
    let names = params.names();
    let mut rng = rng_from_seed(opts.seed);
    let mut reports = Vec::with_capacity(names.len());
    let mut probe = params.clone();
    for (ti, (name, grad)) in analytic_list.iter().enumerate() {
        debug_assert_eq!(&names[ti], name);
        let n = grad.len();
        let coords: Vec<usize> = if n <= opts.max_coords_per_tensor {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.max_coords_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        let floor = 1e-3 * grad.max_abs();
        let mut report = TensorCheck {
            name: name.clone(),
            checked: coords.len(),
            worst_index: 0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
            max_rel_error: 0.0,
        };
        for &ci in &coords {
            let orig = get_coord(&probe, ti, ci);
            set_coord(&mut probe, ti, ci, orig + opts.step);
            let plus = objective(&probe);
            set_coord(&mut probe, ti, ci, orig - opts.step);
            let minus = objective(&probe);
            set_coord(&mut probe, ti, ci, orig);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumericsError::NonFinite { coordinate: ci });
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = grad.data()[ci];
            let err = relative_error(a, numeric, floor);
            if err >= report.max_rel_error {
                report.max_rel_error = err;
                report.worst_index = ci;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
        reports.push(report);
    }
    Ok(reports)
}

fn get_coord<P: Parameters>(p: &P, tensor: usize, coord: usize) -> f64 {
    let mut i = 0;
    let mut out = 0.0;
    p.visit(&mut |_, t| {
        if i == tensor {
            out = t.data()[coord];
        }
        i += 1;
    });
    out
}

fn set_coord<P: Parameters>(p: &mut P, tensor: usize, coord: usize, value: f64) {
    let mut i = 0;
    p.visit_mut(&mut |_, t| {
        if i == tensor {
            t.data_mut()[coord] = value;
        }
        i += 1;
    });
}

/// Neumaier-compensated sum.
///
/// Objectives under a gradient check should be summed with this; plain
/// summation error divided by `2h` swamps small partial derivatives.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn square_at_three() {
        let g = finite_diff_grad(|x| x.data()[0].powi(2), &Tensor::scalar(3.0), 1e-5).unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let g = finite_diff_grad(|_| 4.2, &x, 1e-5).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sum_of_squares() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let g = finite_diff_grad(|x| x.data().iter().map(|v| v * v).sum(), &x, 1e-5).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-7);
        assert!((g.data()[1] - 4.0).abs() < 1e-7);
    }

    #[test]
    fn non_finite_value_names_coordinate() {
        let x = Tensor::new(&[3], vec![1.0, 0.0, 1.0]).unwrap();
        let err = finite_diff_grad(
            |x| if x.data()[1] > 0.0 { f64::NAN } else { 0.0 },
            &x,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, NumericsError::NonFinite { coordinate: 1 }));
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(finite_diff_grad(|_| 0.0, &Tensor::scalar(1.0), 0.0).is_err());
    }
}
