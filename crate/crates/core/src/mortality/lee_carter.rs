use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{logistic, logit, MortalityHistory};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Scale on which the Lee-Carter predictor acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcLink {
    /// `log m = eta`, converted to a probability by `q = 1 - exp(-m)`.
    #[default]
    LogCentralRate,
    /// `logit q = eta` with `q` from the initial-exposure approximation.
    LogitProbability,
}

/// Fitted Lee-Carter surface `eta[x, y] = alpha[x] + beta[x] * kappa[y]` with a
/// random walk with drift on `kappa`. Normalised so that `sum(beta) = 1` and
/// `sum(kappa) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcParams {
    pub ages: Vec<i32>,
    pub years: Vec<i32>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub drift: f64,
    pub sigma_kappa: f64,
    #[serde(default)]
    pub link: LcLink,
}

impl LcParams {
    pub fn age_index(&self, age: i32) -> Option<usize> {
        self.ages.iter().position(|&a| a == age)
    }

    pub fn last_year(&self) -> i32 {
        *self.years.last().expect("fitted LC parameters have at least one year")
    }

    /// Death probability at `age` for a period index value `kappa`.
    pub fn q_at(&self, age: i32, kappa: f64) -> Result<f64> {
        let i = self.age_index(age).ok_or(Error::Range {
            age,
            year: self.last_year(),
        })?;
        let eta = self.alpha[i] + self.beta[i] * kappa;
        Ok(match self.link {
            LcLink::LogCentralRate => -(-eta.exp()).exp_m1(),
            LcLink::LogitProbability => logistic(eta),
        })
    }

    /// Period index for calendar years `first_year..first_year + len`, one row
    /// per path. Years inside the fitted window use the fitted values; later
    /// years follow the random walk with drift from the last fitted value, one
    /// Gaussian innovation per projected year.
    pub fn simulate_kappa(&self, first_year: i32, len: usize, k_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let y_first = self.years[0];
        if first_year < y_first {
            return Err(Error::Range {
                age: self.ages[0],
                year: first_year,
            });
        }
        let last = self.last_year();
        let k_last = *self.kappa.last().unwrap();
        let rows = (0..k_paths)
            .map(|k| {
                let mut rng = rng::stream(seed, Stream::Mortality, k as u64);
                let mut kappa = k_last;
                let mut projected_to = last;
                let mut row = Vec::with_capacity(len);
                for h in 0..len as i32 {
                    let year = first_year + h;
                    if year <= last {
                        row.push(self.kappa[(year - y_first) as usize]);
                        continue;
                    }
                    while projected_to < year {
                        let z: f64 = rng.sample(StandardNormal);
                        kappa += self.drift + self.sigma_kappa * z;
                        projected_to += 1;
                    }
                    row.push(kappa);
                }
                row
            })
            .collect();
        Ok(rows)
    }
}

fn sample_mean_sd(diffs: &[f64]) -> (f64, f64) {
    if diffs.is_empty() {
        return (0.0, 0.0);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    if diffs.len() < 2 {
        return (mean, 0.0);
    }
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Classical Lee-Carter fit: `alpha` is the row mean of the transformed rates,
/// `(beta, kappa)` is the leading singular pair of the centred matrix, rescaled
/// to `sum(beta) = 1`. Drift and volatility are the mean and sample standard
/// deviation of the first differences of `kappa`.
pub fn fit_lc(history: &MortalityHistory, link: LcLink) -> Result<LcParams> {
    let (na, ny) = (history.ages.len(), history.years.len());
    if na == 0 || ny == 0 {
        return Err(Error::Calibration("empty mortality history".into()));
    }
    let mut eta = DMatrix::<f64>::zeros(na, ny);
    for i in 0..na {
        for j in 0..ny {
            let value = match link {
                LcLink::LogCentralRate => {
                    let m = history.central_rate(i, j);
                    if !(m > 0.0) || !m.is_finite() {
                        return Err(Error::Calibration(format!(
                            "central death rate {m} at age {}, year {} is not strictly positive; smooth or aggregate cells first",
                            history.ages[i], history.years[j]
                        )));
                    }
                    m.ln()
                }
                LcLink::LogitProbability => {
                    let q = history.initial_q(i, j);
                    if !(q > 0.0 && q < 1.0) {
                        return Err(Error::Calibration(format!(
                            "empirical q {q} at age {}, year {} is not in (0, 1); smooth or aggregate cells first",
                            history.ages[i], history.years[j]
                        )));
                    }
                    logit(q)
                }
            };
            eta[(i, j)] = value;
        }
    }

    let alpha: Vec<f64> = (0..na).map(|i| eta.row(i).sum() / ny as f64).collect();
    let mut centred = eta;
    for i in 0..na {
        for j in 0..ny {
            centred[(i, j)] -= alpha[i];
        }
    }

    let (beta, kappa) = leading_pair(&centred)?;
    let diffs: Vec<f64> = kappa.windows(2).map(|w| w[1] - w[0]).collect();
    let (drift, sigma_kappa) = sample_mean_sd(&diffs);

    Ok(LcParams {
        ages: history.ages.clone(),
        years: history.years.clone(),
        alpha,
        beta,
        kappa,
        drift,
        sigma_kappa,
        link,
    })
}

fn leading_pair(centred: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (na, ny) = centred.shape();
    if centred.iter().all(|v| v.abs() < 1e-300) {
        // no period variation
        return Ok((vec![1.0 / na as f64; na], vec![0.0; ny]));
    }
    let svd = centred.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Calibration("SVD did not converge".into())),
    };
    let lead = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &s)| if s > best.1 { (i, s) } else { best });
    let (idx, s) = lead;
    let u_col: Vec<f64> = u.column(idx).iter().copied().collect();
    let v_row: Vec<f64> = v_t.row(idx).iter().copied().collect();
    let u_sum: f64 = u_col.iter().sum();
    if u_sum.abs() < 1e-12 {
        return Err(Error::Calibration(
            "age loadings sum to zero; the sum(beta) = 1 normalisation is undefined".into(),
        ));
    }
    let beta = u_col.iter().map(|b| b / u_sum).collect();
    let mut kappa: Vec<f64> = v_row.iter().map(|k| k * s * u_sum).collect();
    let mean = kappa.iter().sum::<f64>() / ny as f64;
    kappa.iter_mut().for_each(|k| *k -= mean);
    Ok((beta, kappa))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generator() -> (Vec<i32>, Vec<i32>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let ages: Vec<i32> = (55..=95).collect();
        let years: Vec<i32> = (1987..=2021).collect();
        let alpha: Vec<f64> = ages.iter().map(|&a| -9.5 + 0.095 * a as f64).collect();
        let raw: Vec<f64> = ages.iter().map(|&a| 1.5 - (a as f64 - 55.0) / 60.0).collect();
        let s: f64 = raw.iter().sum();
        let beta: Vec<f64> = raw.iter().map(|b| b / s).collect();
        let raw_k: Vec<f64> = years
            .iter()
            .map(|&y| -0.8 * (y - 1987) as f64 + 2.0 * ((y as f64) * 0.7).sin())
            .collect();
        let mk = raw_k.iter().sum::<f64>() / raw_k.len() as f64;
        let kappa = raw_k.iter().map(|k| k - mk).collect();
        (ages, years, alpha, beta, kappa)
    }

    #[test]
    fn exact_generator_round_trip() {
        let (ages, years, alpha, beta, kappa) = generator();
        let h = MortalityHistory::from_log_rates(ages.clone(), years.clone(), 1e5, |a, y| {
            let i = (a - 55) as usize;
            let j = (y - 1987) as usize;
            alpha[i] + beta[i] * kappa[j]
        })
        .unwrap();
        let p = fit_lc(&h, LcLink::LogCentralRate).unwrap();
        for i in 0..ages.len() {
            assert!((p.alpha[i] - alpha[i]).abs() < 1e-8);
            assert!((p.beta[i] - beta[i]).abs() < 1e-8);
        }
        for j in 0..years.len() {
            assert!((p.kappa[j] - kappa[j]).abs() < 1e-8);
        }
        assert!((p.beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.kappa.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn constant_kappa_has_no_drift_or_volatility() {
        let h = MortalityHistory::from_log_rates((60..70).collect(), (2000..2010).collect(), 1e4, |a, _| {
            -8.0 + 0.09 * a as f64
        })
        .unwrap();
        let p = fit_lc(&h, LcLink::LogCentralRate).unwrap();
        assert!(p.drift.abs() < 1e-12);
        assert!(p.sigma_kappa.abs() < 1e-12);
        assert!(p.kappa.iter().all(|k| k.abs() < 1e-12));
    }

    #[test]
    fn uniform_beta_recovered_from_rank_one_matrix() {
        let ages: Vec<i32> = (60..80).collect();
        let n = ages.len() as f64;
        let kappa = [3.0, 1.0, -0.5, -1.5, -2.0];
        let h = MortalityHistory::from_log_rates(ages.clone(), (2000..2005).collect(), 1e4, |a, y| {
            -7.0 + 0.08 * a as f64 + kappa[(y - 2000) as usize] / n
        })
        .unwrap();
        let p = fit_lc(&h, LcLink::LogCentralRate).unwrap();
        for b in &p.beta {
            assert!((b - 1.0 / n).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_rate_cell_is_a_calibration_error() {
        let h = MortalityHistory::new(vec![60, 61], vec![2000, 2001], vec![1.0, 0.0, 2.0, 2.0], vec![100.0; 4])
            .unwrap();
        assert!(matches!(fit_lc(&h, LcLink::LogCentralRate), Err(Error::Calibration(_))));
    }

    #[test]
    fn logit_link_round_trip() {
        let ages: Vec<i32> = (60..=90).collect();
        let years: Vec<i32> = (2000..=2019).collect();
        let e = 1e5;
        let mut deaths = Vec::new();
        for &a in &ages {
            for &y in &years {
                let eta = -10.0 + 0.1 * a as f64 + (1.0 / 31.0) * (-(y - 2009) as f64 * 0.5 - 0.25);
                let q = logistic(eta);
                deaths.push(q * e / (1.0 - 0.5 * q));
            }
        }
        let n = deaths.len();
        let h = MortalityHistory::new(ages.clone(), years, deaths, vec![e; n]).unwrap();
        let p = fit_lc(&h, LcLink::LogitProbability).unwrap();
        for b in &p.beta {
            assert!((b - 1.0 / 31.0).abs() < 1e-8);
        }
        assert!((p.drift + 0.5).abs() < 1e-8);
    }
}
