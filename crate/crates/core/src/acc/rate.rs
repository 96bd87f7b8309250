use serde::{Deserialize, Serialize};

use super::AccError;

/// Per-token embedding widths chosen under the symbol budget.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateAllocation {
    pub delta: Vec<usize>,
    pub l_max: u64,
    pub sum_delta: usize,
    pub feasible: bool,
}

/// Checks the budget, level set and ordering constraints.
pub fn allocation_is_valid(gamma: &[f64], delta: &[usize], q: usize, l_max: u64) -> bool {
    let levels = [q / 2, 3 * q / 4, q];
    if gamma.len() != delta.len() || delta.iter().sum::<usize>() as u64 > l_max {
        return false;
    }
    if !delta.iter().all(|d| levels.contains(d)) {
        return false;
    }
    for n in 0..delta.len() {
        for t in 0..delta.len() {
            let dd = delta[n] as f64 - delta[t] as f64;
            if dd * (gamma[n] - gamma[t]) < 0.0 {
                return false;
            }
        }
    }
    true
}

/// Greedy downgrade of the lowest-`γ` tokens, one `q/4` step at a time.
///
/// Ties in `γ` downgrade the higher original index first.
pub fn allocate_rates(gamma: &[f64], q: usize, l_max: u64) -> Result<RateAllocation, AccError> {
    if gamma.is_empty() {
        return Err(AccError::EmptyAllocation);
    }
    if q == 0 || q % 8 != 0 {
        return Err(AccError::InvalidTokenDim(q));
    }
    let n = gamma.len();
    let minimum = (n * q / 2) as u64;
    if minimum > l_max {
        return Err(AccError::InsufficientBudget {
            required: minimum,
            budget: l_max,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gamma[a].total_cmp(&gamma[b]).then(b.cmp(&a)));
    let mut delta = vec![q; n];
    let mut total = (n * q) as u64;
    let step = q / 4;
    let mut cursor = 0;
    while total > l_max {
        let token = order[cursor];
        if delta[token] > q / 2 {
            delta[token] -= step;
            total -= step as u64;
        } else {
            cursor += 1;
        }
    }
    debug_assert!(allocation_is_valid(gamma, &delta, q, l_max));
    Ok(RateAllocation {
        sum_delta: total as usize,
        delta,
        l_max,
        feasible: true,
    })
}

/// Allocation with the budget-infeasibility policy: while even the minimum
/// width overruns the budget, the lowest-`γ` retained token is masked.
///
/// `retained` holds patch indices into `gamma`, strictly increasing.
/// Returns the surviving positions, the allocation over them, and how many
/// tokens were dropped.
pub fn allocate_with_masking(
    gamma: &[f64],
    retained: &[usize],
    q: usize,
    l_max: u64,
) -> Result<(Vec<usize>, RateAllocation, usize), AccError> {
    if (q / 2) as u64 > l_max {
        return Err(AccError::NothingFits { budget: l_max, min_token: q / 2 });
    }
    let mut kept = retained.to_vec();
    let capacity = (l_max / (q / 2) as u64) as usize;
    let mut dropped = 0;
    if kept.len() > capacity {
        let mut order = kept.clone();
        order.sort_by(|&a, &b| gamma[a].total_cmp(&gamma[b]).then(b.cmp(&a)));
        dropped = kept.len() - capacity;
        let removed = &order[..dropped];
        kept.retain(|p| !removed.contains(p));
    }
    let sub: Vec<f64> = kept.iter().map(|&p| gamma[p]).collect();
    let alloc = allocate_rates(&sub, q, l_max)?;
    Ok((kept, alloc, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let g = [0.9, 0.5, 0.1];
        assert_eq!(allocate_rates(&g, 16, 36).unwrap().delta, vec![16, 12, 8]);
        let slack = allocate_rates(&g, 16, 48).unwrap();
        assert_eq!(slack.delta, vec![16, 16, 16]);
        assert_eq!(slack.sum_delta, 48);
        assert_eq!(
            allocate_rates(&g, 16, 20),
            Err(AccError::InsufficientBudget { required: 24, budget: 20 })
        );
    }

    #[test]
    fn ties_downgrade_higher_index() {
        let a = allocate_rates(&[0.5, 0.5], 16, 28).unwrap();
        assert_eq!(a.delta, vec![16, 12]);
    }

    #[test]
    fn masking_policy_drops_lowest() {
        let g = [0.9, 0.1, 0.5, 0.7];
        let (kept, alloc, dropped) = allocate_with_masking(&g, &[0, 1, 2, 3], 16, 24).unwrap();
        assert_eq!(kept, vec![0, 2, 3]);
        assert_eq!(dropped, 1);
        assert_eq!(alloc.delta, vec![8, 8, 8]);
        assert!(matches!(
            allocate_with_masking(&g, &[0], 16, 7),
            Err(AccError::NothingFits { .. })
        ));
    }
}
