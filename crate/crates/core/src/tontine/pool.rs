use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Member balances and death probabilities at one decision time.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    pub wealth: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupGainMode {
    /// Scale credits so that they exactly redistribute the forfeitures.
    Exact,
    /// Use a group gain of 1.
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolCredits {
    /// Credit per member; zero for members who died.
    pub credits: Vec<f64>,
    pub group_gain: f64,
    pub forfeiture: f64,
}

impl PoolState {
    pub fn new(wealth: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        if wealth.len() != delta.len() {
            return Err(Error::Dimension(format!(
                "{} wealths and {} death probabilities",
                wealth.len(),
                delta.len()
            )));
        }
        if let Some(w) = wealth.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Pool(format!("member wealth {w} must be nonnegative")));
        }
        if let Some(d) = delta.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(Error::Domain(format!("death probability {d} outside [0, 1)")));
        }
        Ok(Self { wealth, delta })
    }

    pub fn homogeneous(members: usize, wealth: f64, delta: f64) -> Result<Self> {
        Self::new(vec![wealth; members], vec![delta; members])
    }

    pub fn len(&self) -> usize {
        self.wealth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wealth.is_empty()
    }

    fn gain(&self, j: usize) -> f64 {
        self.delta[j] / (1.0 - self.delta[j])
    }
}

/// Mortality credits `c_j = g_j W_j Gamma` for survivors, where the group gain
/// `Gamma` is forfeitures over the survivors' expected credits in exact mode
/// and 1 in unit mode.
pub fn pool_credits(pool: &PoolState, died: &[bool], mode: GroupGainMode) -> Result<PoolCredits> {
    if died.len() != pool.len() {
        return Err(Error::Dimension(format!(
            "{} death indicators for {} members",
            died.len(),
            pool.len()
        )));
    }
    let mut forfeiture = 0.0;
    let mut expected = 0.0;
    for j in 0..pool.len() {
        if died[j] {
            forfeiture += pool.wealth[j];
        } else {
            expected += pool.gain(j) * pool.wealth[j];
        }
    }
    let group_gain = match mode {
        GroupGainMode::Unit => 1.0,
        GroupGainMode::Exact => {
            if forfeiture == 0.0 {
                0.0
            } else if expected > 0.0 {
                forfeiture / expected
            } else {
                return Err(Error::Pool(format!(
                    "forfeiture {forfeiture} but no surviving member can receive credits; group gain undefined"
                )));
            }
        }
    };
    let credits = (0..pool.len())
        .map(|j| if died[j] { 0.0 } else { pool.gain(j) * pool.wealth[j] * group_gain })
        .collect();
    Ok(PoolCredits {
        credits,
        group_gain,
        forfeiture,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBiasReport {
    /// `g_j W_j / sum_k delta_k W_k`; infinite when the denominator is zero.
    pub ratios: Vec<f64>,
    pub flagged: Vec<usize>,
    pub threshold: f64,
    pub zero_aggregate: bool,
}

/// Concentration of each member's expected credit relative to the pool's
/// aggregate expected forfeiture.
pub fn small_bias_check(pool: &PoolState, threshold: f64) -> SmallBiasReport {
    let aggregate: f64 = pool.delta.iter().zip(&pool.wealth).map(|(d, w)| d * w).sum();
    let zero_aggregate = aggregate <= 0.0;
    let ratios: Vec<f64> = (0..pool.len())
        .map(|j| {
            if zero_aggregate {
                f64::INFINITY
            } else {
                pool.gain(j) * pool.wealth[j] / aggregate
            }
        })
        .collect();
    let flagged = ratios
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > threshold)
        .map(|(j, _)| j)
        .collect();
    SmallBiasReport {
        ratios,
        flagged,
        threshold,
        zero_aggregate,
    }
}
