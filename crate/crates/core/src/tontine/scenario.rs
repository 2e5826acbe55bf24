use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar problem parameters. Money is in thousands of real currency units,
/// time in years with one decision per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub w0: f64,
    /// Purchase price in nominal units at inception.
    pub l0: f64,
    pub t: f64,
    pub m: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub varrho: f64,
    pub mu_bc: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub asset_count: usize,
    pub x0: i32,
    pub y0: i32,
    /// Asset that carries a negative balance.
    #[serde(default = "default_bond_index")]
    pub bond_index: usize,
}

fn default_bond_index() -> usize {
    1
}

impl ScenarioConfig {
    /// Two-asset synthetic-market scenario for a 65-year-old with a fee
    /// equivalent to a continuous 0.5% charge.
    pub fn validation() -> Self {
        Self {
            w0: 1000.0,
            l0: 1000.0,
            t: 30.0,
            m: 30,
            q_min: 40.0,
            q_max: 80.0,
            varrho: -(-0.005f64).exp_m1(),
            mu_bc: 0.02,
            alpha: 0.05,
            gamma: 1.0,
            epsilon: -1e-4,
            asset_count: 2,
            x0: 65,
            y0: 2022,
            bond_index: 1,
        }
    }

    /// Four-asset internationally diversified scenario with an 11 bps fee.
    pub fn australia() -> Self {
        Self {
            varrho: 0.0011,
            asset_count: 4,
            ..Self::validation()
        }
    }

    pub fn dt(&self) -> f64 {
        self.t / self.m as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Validation(format!("scenario.{field}: {msg}")));
        if !(self.w0.is_finite() && self.w0 > 0.0) {
            return fail("w0", format!("{} must be positive", self.w0));
        }
        if !(self.l0.is_finite() && self.l0 > 0.0) {
            return fail("l0", format!("{} must be positive", self.l0));
        }
        if self.m == 0 {
            return fail("m", "at least one period is required".into());
        }
        if (self.t - self.m as f64).abs() > 1e-12 {
            return fail("t", format!("T = {} must equal M = {} with annual steps", self.t, self.m));
        }
        if !(self.q_min >= 0.0 && self.q_min <= self.q_max && self.q_max.is_finite()) {
            return fail("q_min", format!("need 0 <= q_min ({}) <= q_max ({})", self.q_min, self.q_max));
        }
        if !(0.0..1.0).contains(&self.varrho) {
            return fail("varrho", format!("{} outside [0, 1)", self.varrho));
        }
        if !self.mu_bc.is_finite() {
            return fail("mu_bc", "must be finite".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha", format!("{} outside (0, 1)", self.alpha));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return fail("gamma", format!("{} must be nonnegative", self.gamma));
        }
        if !self.epsilon.is_finite() {
            return fail("epsilon", "must be finite".into());
        }
        if self.asset_count != 2 && self.asset_count != 4 {
            return fail("asset_count", format!("{} must be 2 or 4", self.asset_count));
        }
        if self.bond_index >= self.asset_count {
            return fail("bond_index", format!("{} out of range", self.bond_index));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        let v = ScenarioConfig::validation();
        v.validate().unwrap();
        assert!((v.varrho - 0.004_987_520_807_317_687).abs() < 1e-15);
        ScenarioConfig::australia().validate().unwrap();
    }

    #[test]
    fn bound_order_checked() {
        let s = ScenarioConfig {
            q_min: 90.0,
            ..ScenarioConfig::validation()
        };
        assert!(s.validate().unwrap_err().to_string().contains("scenario.q_min"));
    }
}
