use std::io::Write;

use serde::{Deserialize, Serialize};

use super::risk::percentile_sorted;
use super::rollout::RolloutResult;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::tontine::ScenarioConfig;

/// Control surfaces over a wealth grid and decision times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub wealth_grid: Vec<f64>,
    pub times: Vec<f64>,
    pub asset_names: Vec<String>,
    /// `withdrawal[i][j]` at wealth `i`, time `j`.
    pub withdrawal: Vec<Vec<f64>>,
    /// `allocation[a][i][j]`.
    pub allocation: Vec<Vec<Vec<f64>>>,
}

/// Wealth percentiles of a rollout at every decision time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub times: Vec<f64>,
    pub p5: Vec<f64>,
    pub p50: Vec<f64>,
    pub p95: Vec<f64>,
}

/// `0, W0/50, ..., 2 W0`.
pub fn default_wealth_grid(w0: f64) -> Vec<f64> {
    (0..=100).map(|i| i as f64 * w0 / 50.0).collect()
}

pub fn decision_times(scen: &ScenarioConfig) -> Vec<f64> {
    (0..scen.m).map(|m| m as f64 * scen.dt()).collect()
}

/// Evaluates both networks on `wealth_grid x times`. Grid wealth is the input
/// to the withdrawal network and, separately, the post-withdrawal input to
/// the allocation network.
pub fn export_heatmap(
    policy: &Policy,
    scen: &ScenarioConfig,
    asset_names: &[String],
    wealth_grid: &[f64],
    times: &[f64],
) -> Result<Heatmap> {
    if wealth_grid.iter().any(|w| !w.is_finite()) || wealth_grid.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::Validation("wealth grid must be finite and ascending".into()));
    }
    let k = policy.spec.asset_count();
    if asset_names.len() != k {
        return Err(Error::Dimension(format!("{} asset names for {k} assets", asset_names.len())));
    }
    let mut withdrawal = vec![vec![0.0; times.len()]; wealth_grid.len()];
    let mut allocation = vec![vec![vec![0.0; times.len()]; wealth_grid.len()]; k];
    for (i, &w) in wealth_grid.iter().enumerate() {
        for (j, &t) in times.iter().enumerate() {
            withdrawal[i][j] = policy.forward_q(w, t, scen.q_min, scen.q_max);
            for (a, p) in policy.forward_p(w, t).into_iter().enumerate() {
                allocation[a][i][j] = p;
            }
        }
    }
    Ok(Heatmap {
        wealth_grid: wealth_grid.to_vec(),
        times: times.to_vec(),
        asset_names: asset_names.to_vec(),
        withdrawal,
        allocation,
    })
}

/// 5th, 50th and 95th percentiles of pre-withdrawal wealth at `t_0..t_M`.
pub fn wealth_percentiles(r: &RolloutResult, dt: f64) -> Result<Percentiles> {
    if r.n_paths == 0 {
        return Err(Error::Validation("rollout has no paths".into()));
    }
    let cols = r.horizon + 1;
    let mut out = Percentiles {
        times: (0..cols).map(|m| m as f64 * dt).collect(),
        p5: Vec::with_capacity(cols),
        p50: Vec::with_capacity(cols),
        p95: Vec::with_capacity(cols),
    };
    let mut col = vec![0.0; r.n_paths];
    for m in 0..cols {
        for (n, c) in col.iter_mut().enumerate() {
            *c = r.wealth_panel[n * cols + m];
        }
        col.sort_by(f64::total_cmp);
        out.p5.push(percentile_sorted(&col, 0.05));
        out.p50.push(percentile_sorted(&col, 0.50));
        out.p95.push(percentile_sorted(&col, 0.95));
    }
    Ok(out)
}

fn write_surface(grid: &[f64], times: &[f64], surface: &[Vec<f64>], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["wealth".to_string()];
    header.extend(times.iter().map(|t| format!("t={t}")));
    w.write_record(&header)?;
    for (i, row) in surface.iter().enumerate() {
        let mut rec = vec![format!("{}", grid[i])];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

impl Heatmap {
    /// Writes `heatmap_<asset>.csv` per asset and `heatmap_withdrawal.csv`
    /// into `dir`, returning the written paths.
    pub fn write_csvs(&self, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
        let mut written = Vec::new();
        for (a, name) in self.asset_names.iter().enumerate() {
            let p = dir.join(format!("heatmap_{name}.csv"));
            write_surface(&self.wealth_grid, &self.times, &self.allocation[a], std::fs::File::create(&p)?)?;
            written.push(p);
        }
        let p = dir.join("heatmap_withdrawal.csv");
        write_surface(&self.wealth_grid, &self.times, &self.withdrawal, std::fs::File::create(&p)?)?;
        written.push(p);
        Ok(written)
    }
}

pub fn write_percentiles_csv(p: &Percentiles, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "p5", "p50", "p95"])?;
    for i in 0..p.times.len() {
        w.write_record([p.times[i], p.p5[i], p.p50[i], p.p95[i]].map(|v| format!("{v}")))?;
    }
    w.flush()?;
    Ok(())
}
