use crate::error::{Error, Result};

/// Simplex tolerance for allocation vectors.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Tontine gain rate for period `m`: `delta / (1 - delta)` for `m >= 1` and a
/// positive balance, 0 otherwise.
#[inline]
pub fn effective_gain(m: usize, delta_prev: f64, wealth_pre_credit: f64) -> f64 {
    if m == 0 || wealth_pre_credit <= 0.0 {
        0.0
    } else {
        delta_prev / (1.0 - delta_prev)
    }
}

/// `W(m-) = (1 - fee) (1 + g) W`, with the fee charged only for `m >= 1` and a
/// positive credited balance.
#[inline]
pub fn apply_credit_and_fee(m: usize, delta_prev: f64, gross_wealth: f64, varrho: f64) -> f64 {
    let credited = (1.0 + effective_gain(m, delta_prev, gross_wealth)) * gross_wealth;
    if m >= 1 && credited > 0.0 {
        (1.0 - varrho) * credited
    } else {
        credited
    }
}

/// Admissible withdrawal interval `[lo, hi]`.
#[inline]
pub fn withdrawal_bounds(wealth_pre: f64, m: usize, horizon: usize, q_min: f64, q_max: f64) -> (f64, f64) {
    if m >= horizon {
        (0.0, 0.0)
    } else if wealth_pre >= q_max {
        (q_min, q_max)
    } else {
        (q_min, q_min.max(wealth_pre))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountState {
    pub wealth_pre: f64,
    pub wealth_post: f64,
    pub allocations: Vec<f64>,
    pub insolvent: bool,
}

/// Gross wealth at the next decision time, without validation.
#[inline]
pub fn next_wealth(wealth_post: f64, p: &[f64], gross: &[f64], mu_bc: f64, bond_index: usize) -> f64 {
    if wealth_post > 0.0 {
        p.iter().zip(gross).map(|(pa, ga)| pa * ga).sum::<f64>() * wealth_post
    } else {
        wealth_post * gross[bond_index] * mu_bc.exp()
    }
}

pub fn check_simplex(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v >= -SIMPLEX_TOL)) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Contract(format!("allocation {p:?} is not on the simplex (sum {sum})")));
    }
    Ok(())
}

/// Withdraws `q`, rebalances into `p` and evolves one period. A nonpositive
/// post-withdrawal balance is held entirely in the bond leg and grows at the
/// bond return times `exp(mu_bc)`.
pub fn step_account(
    wealth_pre: f64,
    q: f64,
    p: &[f64],
    gross: &[f64],
    mu_bc: f64,
    bond_index: usize,
) -> Result<(AccountState, f64)> {
    if p.len() != gross.len() || bond_index >= gross.len() {
        return Err(Error::Dimension(format!(
            "{} weights, {} returns, bond index {bond_index}",
            p.len(),
            gross.len()
        )));
    }
    let wealth_post = wealth_pre - q;
    let insolvent = wealth_post <= 0.0;
    let allocations = if insolvent {
        let mut a = vec![0.0; p.len()];
        a[bond_index] = wealth_post;
        a
    } else {
        check_simplex(p)?;
        p.iter().map(|pa| pa * wealth_post).collect()
    };
    let next = next_wealth(wealth_post, p, gross, mu_bc, bond_index);
    Ok((
        AccountState {
            wealth_pre,
            wealth_post,
            allocations,
            insolvent,
        },
        next,
    ))
}
