//! Mortality inputs: deterministic life tables and stochastic Lee-Carter /
//! Cairns-Blake-Dowd surfaces, reduced to pathwise one-year death
//! probabilities along the retiree's age-year diagonal.

mod cbd;
mod history;
mod lee_carter;
mod simulate;
mod table;

pub use cbd::{fit_cbd, CbdParams};
pub use history::{load_history, MortalityHistory};
pub use lee_carter::{fit_lc, LcLink, LcParams};
pub use simulate::{lc_period_table, simulate_deltas, DeathProbPaths, MortalityModel, Q_CLAMP};
pub use table::{gompertz_table, load_life_table, table_deltas, LifeTable};

use crate::error::{Error, Result};

/// Tontine gain rates `g = δ / (1 - δ)` for a row of one-year death
/// probabilities.
pub fn gain_rates(delta_row: &[f64]) -> Result<Vec<f64>> {
    delta_row
        .iter()
        .map(|&d| {
            if !(0.0..1.0).contains(&d) {
                Err(Error::Domain(format!("death probability {d} outside [0, 1)")))
            } else {
                Ok(d / (1.0 - d))
            }
        })
        .collect()
}

pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logit(q: f64) -> f64 {
    (q / (1.0 - q)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gain_rate_examples() {
        assert_eq!(gain_rates(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(gain_rates(&[0.5]).unwrap(), vec![1.0]);
        // 0.02 / 0.98 evaluated by hand to 12 digits
        let g = gain_rates(&[0.02]).unwrap()[0];
        assert!((g - 0.020_408_163_265_3).abs() < 1e-12);
        assert!(gain_rates(&[1.0]).is_err());
        assert!(gain_rates(&[-0.1]).is_err());
    }

    proptest! {
        #[test]
        fn gain_rate_inverts_and_is_monotone(a in 0.0f64..0.999, b in 0.0f64..0.999) {
            let g = gain_rates(&[a, b]).unwrap();
            prop_assert!((g[0] / (1.0 + g[0]) - a).abs() < 1e-14);
            if a < b {
                prop_assert!(g[0] < g[1]);
            }
        }
    }
}
