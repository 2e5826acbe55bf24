use serde::{Deserialize, Serialize};

use super::{table_deltas, CbdParams, LcParams, LifeTable};
use crate::error::{Error, Result};

/// Lower clamp for projected probabilities; the upper clamp is `1 - Q_CLAMP`.
pub const Q_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum MortalityModel {
    Table(LifeTable),
    LeeCarter(LcParams),
    Cbd(CbdParams),
}

/// One-year death probabilities along the diagonal `(x0 + m, y0 + m)`,
/// stored row-major as `k_paths x horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeathProbPaths {
    pub delta: Vec<f64>,
    pub k_paths: usize,
    pub horizon: usize,
    pub x0: i32,
    pub y0: i32,
    /// Number of projected probabilities that were clamped into
    /// `[Q_CLAMP, 1 - Q_CLAMP]`.
    pub clamped: usize,
}

impl DeathProbPaths {
    pub fn row(&self, k: usize) -> &[f64] {
        &self.delta[k * self.horizon..(k + 1) * self.horizon]
    }

    /// A `k_paths x horizon` block with the same row on every path.
    pub fn replicate(row: &[f64], k_paths: usize, x0: i32, y0: i32) -> Self {
        let mut delta = Vec::with_capacity(row.len() * k_paths);
        for _ in 0..k_paths {
            delta.extend_from_slice(row);
        }
        Self {
            delta,
            k_paths,
            horizon: row.len(),
            x0,
            y0,
            clamped: 0,
        }
    }

    /// Mean over paths of each column.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.horizon];
        for k in 0..self.k_paths {
            for (m, d) in self.row(k).iter().enumerate() {
                means[m] += d;
            }
        }
        means.iter_mut().for_each(|v| *v /= self.k_paths.max(1) as f64);
        means
    }
}

fn clamp_q(q: f64, clamped: &mut usize) -> f64 {
    if q.is_nan() || q > 1.0 - Q_CLAMP {
        *clamped += 1;
        1.0 - Q_CLAMP
    } else if q < Q_CLAMP {
        *clamped += 1;
        Q_CLAMP
    } else {
        q
    }
}

fn check_ages(ages: &[i32], x0: i32, horizon: usize, year: i32) -> Result<()> {
    for m in 0..horizon as i32 {
        if !ages.contains(&(x0 + m)) {
            return Err(Error::Range { age: x0 + m, year: year + m });
        }
    }
    Ok(())
}

/// Pathwise death probabilities `delta[k][m] = q^{(k)}(x0 + m, y0 + m)`.
///
/// Life tables give identical rows. Lee-Carter and CBD project their period
/// indices by the fitted random walk with drift, one innovation per projected
/// year, from the `(seed, path)` mortality stream.
pub fn simulate_deltas(
    model: &MortalityModel,
    x0: i32,
    y0: i32,
    horizon: usize,
    k_paths: usize,
    seed: u64,
) -> Result<DeathProbPaths> {
    match model {
        MortalityModel::Table(table) => {
            let row = table_deltas(table, x0, y0, horizon)?;
            Ok(DeathProbPaths::replicate(&row, k_paths, x0, y0))
        }
        MortalityModel::LeeCarter(p) => {
            check_ages(&p.ages, x0, horizon, y0)?;
            let kappa = p.simulate_kappa(y0, horizon, k_paths, seed)?;
            let mut clamped = 0;
            let mut delta = Vec::with_capacity(k_paths * horizon);
            for row in &kappa {
                for (m, &k) in row.iter().enumerate() {
                    let q = p.q_at(x0 + m as i32, k)?;
                    delta.push(clamp_q(q, &mut clamped));
                }
            }
            Ok(DeathProbPaths {
                delta,
                k_paths,
                horizon,
                x0,
                y0,
                clamped,
            })
        }
        MortalityModel::Cbd(p) => {
            check_ages(&p.ages, x0, horizon, y0)?;
            let kappa = p.simulate_kappa(y0, horizon, k_paths, seed)?;
            let mut clamped = 0;
            let mut delta = Vec::with_capacity(k_paths * horizon);
            for row in &kappa {
                for (m, &(k1, k2)) in row.iter().enumerate() {
                    let q = p.q_at(x0 + m as i32, k1, k2);
                    delta.push(clamp_q(q, &mut clamped));
                }
            }
            Ok(DeathProbPaths {
                delta,
                k_paths,
                horizon,
                x0,
                y0,
                clamped,
            })
        }
    }
}

/// Period life table implied by a Lee-Carter fit with the period index frozen
/// at `kappa`, repeated over `years`.
pub fn lc_period_table(p: &LcParams, kappa: f64, years: std::ops::RangeInclusive<i32>) -> Result<LifeTable> {
    let mut entries = Vec::new();
    for &age in &p.ages {
        let q = p.q_at(age, kappa)?.clamp(Q_CLAMP, 1.0 - Q_CLAMP);
        for y in years.clone() {
            entries.push((age, y, q));
        }
    }
    LifeTable::from_entries(entries)
}
