use std::io::Write;

use serde::{Deserialize, Serialize};

use super::risk::empirical_var_cvar;
use super::rollout::{rollout, Controller};
use crate::error::{Error, Result};
use crate::market::PathSet;
use crate::tontine::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub weights: Vec<f64>,
    pub q: f64,
    pub cvar: f64,
    pub var: f64,
    /// `E[sum q] / T`.
    pub ew_annualized: f64,
    pub candidates: usize,
}

/// All weight vectors on the simplex with entries in multiples of `step`, in
/// lexicographic order.
pub fn simplex_grid(k: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    let units = (1.0 / step).round();
    if !(step > 0.0) || units < 1.0 || (units * step - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("grid step {step} does not divide 1")));
    }
    if k == 0 {
        return Err(Error::Dimension("simplex grid needs at least one asset".into()));
    }
    let units = units as usize;
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for u in 0..=left {
            cur[i] = u;
            rec(i + 1, left - u, cur, out);
        }
    }
    let mut ints = Vec::new();
    rec(0, units, &mut cur, &mut ints);
    for v in ints {
        out.push(v.iter().map(|&u| u as f64 / units as f64).collect());
    }
    Ok(out)
}

/// Constant-weight benchmark: withdraw `q` every period and pick the grid
/// allocation with the largest CVaR of terminal wealth. Ties keep the first
/// candidate in lexicographic order.
///
/// With `tontine = false` the account runs without the overlay: no mortality
/// credits and no tontine fee.
pub fn benchmark_search(
    paths: &PathSet,
    scen: &ScenarioConfig,
    grid_step: f64,
    q: f64,
    tontine: bool,
) -> Result<BenchmarkResult> {
    let grid = simplex_grid(paths.n_assets, grid_step)?;
    let plain;
    let (paths, scen) = if tontine {
        (paths, scen.clone())
    } else {
        let mut p = paths.clone();
        p.deltas = None;
        plain = p;
        (&plain, ScenarioConfig { varrho: 0.0, ..scen.clone() })
    };
    let scen = &scen;
    let mut best: Option<BenchmarkResult> = None;
    for w in &grid {
        let r = rollout(
            &Controller::Constant {
                q,
                weights: w.clone(),
            },
            paths,
            scen,
        )?;
        let (var, cvar) = empirical_var_cvar(&r.terminal_wealth, scen.alpha)?;
        if best.as_ref().is_none_or(|b| cvar > b.cvar) {
            best = Some(BenchmarkResult {
                weights: w.clone(),
                q,
                cvar,
                var,
                ew_annualized: r.ew_annualized(scen.t),
                candidates: grid.len(),
            });
        }
    }
    best.ok_or_else(|| Error::Validation("empty benchmark grid".into()))
}

pub fn write_benchmark_csv(res: &BenchmarkResult, asset_names: &[String], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = asset_names.iter().map(|n| format!("w_{n}")).collect();
    header.extend(["q", "ew_annualized", "var", "cvar"].map(String::from));
    w.write_record(&header)?;
    let mut row: Vec<String> = res.weights.iter().map(|v| format!("{v}")).collect();
    row.extend([res.q, res.ew_annualized, res.var, res.cvar].map(|v| format!("{v}")));
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}
