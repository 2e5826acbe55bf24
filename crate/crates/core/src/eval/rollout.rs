use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::PathSet;
use crate::policy::{run_path, PathTape, Policy};
use crate::tontine::{apply_credit_and_fee, check_simplex, step_account, withdrawal_bounds, ScenarioConfig};

/// A decision rule applied along every path.
#[derive(Debug, Clone)]
pub enum Controller<'a> {
    Neural(&'a Policy),
    /// Fixed withdrawal (clamped into the admissible interval) and fixed
    /// portfolio weights.
    Constant { q: f64, weights: Vec<f64> },
}

/// Per-path outcomes, all matrices row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub n_paths: usize,
    pub horizon: usize,
    pub n_assets: usize,
    pub terminal_wealth: Vec<f64>,
    /// `n x (M + 1)`; column `M` is zero.
    pub withdrawals: Vec<f64>,
    /// Wealth after credit and fee, before the withdrawal, `n x (M + 1)`.
    pub wealth_panel: Vec<f64>,
    /// Allocation fractions, `n x M x k`.
    pub allocations: Vec<f64>,
}

impl RolloutResult {
    pub fn withdrawals_of(&self, n: usize) -> &[f64] {
        &self.withdrawals[n * (self.horizon + 1)..(n + 1) * (self.horizon + 1)]
    }

    pub fn wealth_of(&self, n: usize) -> &[f64] {
        &self.wealth_panel[n * (self.horizon + 1)..(n + 1) * (self.horizon + 1)]
    }

    /// `E[sum q] / T`.
    pub fn ew_annualized(&self, t: f64) -> f64 {
        self.withdrawals.iter().sum::<f64>() / (self.n_paths as f64 * t)
    }
}

pub(crate) fn check_dims(paths: &PathSet, scen: &ScenarioConfig, k: usize) -> Result<()> {
    if paths.n_periods != scen.m {
        return Err(Error::Dimension(format!(
            "paths have {} periods, scenario has M = {}",
            paths.n_periods, scen.m
        )));
    }
    if paths.n_assets != k || k != scen.asset_count {
        return Err(Error::Dimension(format!(
            "paths have {} assets, policy {k}, scenario {}",
            paths.n_assets, scen.asset_count
        )));
    }
    Ok(())
}

struct PathOut {
    q: Vec<f64>,
    w: Vec<f64>,
    p: Vec<f64>,
}

fn constant_path(paths: &PathSet, scen: &ScenarioConfig, n: usize, q_rule: f64, weights: &[f64]) -> Result<PathOut> {
    let big_m = scen.m;
    let deltas = paths.delta_path(n);
    let mut q_out = vec![0.0; big_m + 1];
    let mut w_out = vec![0.0; big_m + 1];
    let mut p_out = Vec::with_capacity(big_m * weights.len());
    let mut g = scen.w0;
    for m in 0..=big_m {
        let delta = if m >= 1 { deltas.map_or(0.0, |d| d[m - 1]) } else { 0.0 };
        let w_pre = apply_credit_and_fee(m, delta, g, scen.varrho);
        w_out[m] = w_pre;
        if m == big_m {
            break;
        }
        let (lo, hi) = withdrawal_bounds(w_pre, m, big_m, scen.q_min, scen.q_max);
        let q = q_rule.clamp(lo, hi);
        q_out[m] = q;
        let (state, next) = step_account(w_pre, q, weights, paths.gross_at(n, m), scen.mu_bc, scen.bond_index)
            .map_err(|e| Error::Simulation {
                path: n,
                period: m,
                msg: e.to_string(),
            })?;
        if state.insolvent {
            let mut b = vec![0.0; weights.len()];
            b[scen.bond_index] = 1.0;
            p_out.extend(b);
        } else {
            p_out.extend_from_slice(weights);
        }
        g = next;
    }
    Ok(PathOut {
        q: q_out,
        w: w_out,
        p: p_out,
    })
}

/// Applies credit and fee, withdrawal, rebalancing and evolution on every
/// path.
pub fn rollout(controller: &Controller, paths: &PathSet, scen: &ScenarioConfig) -> Result<RolloutResult> {
    scen.validate()?;
    let k = match controller {
        Controller::Neural(p) => p.spec.asset_count(),
        Controller::Constant { weights, .. } => {
            check_simplex(weights)?;
            weights.len()
        }
    };
    check_dims(paths, scen, k)?;
    let big_m = scen.m;
    let outs: Vec<Result<PathOut>> = match controller {
        Controller::Constant { q, weights } => (0..paths.n_paths)
            .into_par_iter()
            .map(|n| constant_path(paths, scen, n, *q, weights))
            .collect(),
        Controller::Neural(policy) => (0..paths.n_paths)
            .into_par_iter()
            .map_init(
                || PathTape::new(&policy.spec, big_m),
                |tape, n| {
                    let gross = &paths.gross[n * big_m * k..(n + 1) * big_m * k];
                    run_path(&policy.spec, &policy.params, scen, gross, paths.delta_path(n), tape);
                    let mut q = tape.q.clone();
                    q.push(0.0);
                    Ok(PathOut {
                        q,
                        w: tape.wealth_pre.clone(),
                        p: tape.p.clone(),
                    })
                },
            )
            .collect(),
    };
    let mut res = RolloutResult {
        n_paths: paths.n_paths,
        horizon: big_m,
        n_assets: k,
        terminal_wealth: Vec::with_capacity(paths.n_paths),
        withdrawals: Vec::with_capacity(paths.n_paths * (big_m + 1)),
        wealth_panel: Vec::with_capacity(paths.n_paths * (big_m + 1)),
        allocations: Vec::with_capacity(paths.n_paths * big_m * k),
    };
    for o in outs {
        let o = o?;
        res.terminal_wealth.push(o.w[big_m]);
        res.withdrawals.extend(o.q);
        res.wealth_panel.extend(o.w);
        res.allocations.extend(o.p);
    }
    Ok(res)
}
