use nalgebra::{Matrix2, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{logistic, logit, MortalityHistory};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Two-factor Cairns-Blake-Dowd surface
/// `logit q[x, y] = kappa1[y] + kappa2[y] * (x - xbar)`
/// with a bivariate random walk with drift on `(kappa1, kappa2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbdParams {
    pub ages: Vec<i32>,
    pub years: Vec<i32>,
    pub kappa1: Vec<f64>,
    pub kappa2: Vec<f64>,
    pub drift: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub xbar: f64,
}

impl CbdParams {
    pub fn last_year(&self) -> i32 {
        *self.years.last().expect("fitted CBD parameters have at least one year")
    }

    pub fn q_at(&self, age: i32, k1: f64, k2: f64) -> f64 {
        logistic(k1 + k2 * (age as f64 - self.xbar))
    }

    /// Lower-triangular factor `L` with `L L^T = cov`. Falls back to an
    /// eigen-decomposition with small negative eigenvalues zeroed when the
    /// matrix is only positive semidefinite.
    pub fn cov_factor(&self) -> Result<[[f64; 2]; 2]> {
        let c = Matrix2::new(self.cov[0][0], self.cov[0][1], self.cov[1][0], self.cov[1][1]);
        if let Some(ch) = c.cholesky() {
            let l = ch.l();
            return Ok([[l[(0, 0)], 0.0], [l[(1, 0)], l[(1, 1)]]]);
        }
        let eig = SymmetricEigen::new(c);
        let mut sqrt_vals = [0.0; 2];
        for (i, &v) in eig.eigenvalues.iter().enumerate() {
            if v < -1e-12 {
                return Err(Error::Calibration(format!(
                    "CBD innovation covariance has negative eigenvalue {v}"
                )));
            }
            sqrt_vals[i] = v.max(0.0).sqrt();
        }
        let q = eig.eigenvectors;
        Ok([
            [q[(0, 0)] * sqrt_vals[0], q[(0, 1)] * sqrt_vals[1]],
            [q[(1, 0)] * sqrt_vals[0], q[(1, 1)] * sqrt_vals[1]],
        ])
    }

    /// `(kappa1, kappa2)` for calendar years `first_year..first_year + len`,
    /// one entry per path, mirroring the Lee-Carter projection rule.
    pub fn simulate_kappa(
        &self,
        first_year: i32,
        len: usize,
        k_paths: usize,
        seed: u64,
    ) -> Result<Vec<Vec<(f64, f64)>>> {
        let y_first = self.years[0];
        if first_year < y_first {
            return Err(Error::Range {
                age: self.ages[0],
                year: first_year,
            });
        }
        let a = self.cov_factor()?;
        let last = self.last_year();
        let n = self.kappa1.len();
        let start = (self.kappa1[n - 1], self.kappa2[n - 1]);
        let rows = (0..k_paths)
            .map(|k| {
                let mut rng = rng::stream(seed, Stream::Mortality, k as u64);
                let (mut k1, mut k2) = start;
                let mut projected_to = last;
                let mut row = Vec::with_capacity(len);
                for h in 0..len as i32 {
                    let year = first_year + h;
                    if year <= last {
                        let j = (year - y_first) as usize;
                        row.push((self.kappa1[j], self.kappa2[j]));
                        continue;
                    }
                    while projected_to < year {
                        let z1: f64 = rng.sample(StandardNormal);
                        let z2: f64 = rng.sample(StandardNormal);
                        k1 += self.drift[0] + a[0][0] * z1 + a[0][1] * z2;
                        k2 += self.drift[1] + a[1][0] * z1 + a[1][1] * z2;
                        projected_to += 1;
                    }
                    row.push((k1, k2));
                }
                row
            })
            .collect();
        Ok(rows)
    }
}

/// Per-year least squares of empirical `logit q` on `(1, x - xbar)`, with
/// `q = D / (Ec + D/2)`. Drift is the mean and `cov` the sample covariance
/// of the first differences of the fitted pair.
pub fn fit_cbd(history: &MortalityHistory, xbar: f64) -> Result<CbdParams> {
    let (na, ny) = (history.ages.len(), history.years.len());
    if ny == 0 {
        return Err(Error::Calibration("empty mortality history".into()));
    }
    if na < 2 {
        return Err(Error::Calibration(
            "CBD least squares needs at least two distinct ages".into(),
        ));
    }
    let x: Vec<f64> = history.ages.iter().map(|&a| a as f64 - xbar).collect();
    let n = na as f64;
    let sx: f64 = x.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let det = n * sxx - sx * sx;
    if det.abs() <= 1e-12 * n * sxx.max(1.0) {
        return Err(Error::Calibration("CBD design matrix is rank deficient".into()));
    }

    let mut kappa1 = Vec::with_capacity(ny);
    let mut kappa2 = Vec::with_capacity(ny);
    for j in 0..ny {
        let mut sy = 0.0;
        let mut sxy = 0.0;
        for i in 0..na {
            let q = history.initial_q(i, j);
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Calibration(format!(
                    "empirical q {q} at age {}, year {} is not in (0, 1)",
                    history.ages[i], history.years[j]
                )));
            }
            let y = logit(q);
            sy += y;
            sxy += x[i] * y;
        }
        let xm = sx / n;
        let ym = sy / n;
        let b = (sxy - n * xm * ym) / (sxx - n * xm * xm);
        kappa1.push(ym - b * xm);
        kappa2.push(b);
    }

    let d1: Vec<f64> = kappa1.windows(2).map(|w| w[1] - w[0]).collect();
    let d2: Vec<f64> = kappa2.windows(2).map(|w| w[1] - w[0]).collect();
    let (drift, cov) = drift_and_cov(&d1, &d2);

    Ok(CbdParams {
        ages: history.ages.clone(),
        years: history.years.clone(),
        kappa1,
        kappa2,
        drift,
        cov,
        xbar,
    })
}

fn drift_and_cov(d1: &[f64], d2: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = d1.len();
    if n == 0 {
        return ([0.0; 2], [[0.0; 2]; 2]);
    }
    let m1 = d1.iter().sum::<f64>() / n as f64;
    let m2 = d2.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return ([m1, m2], [[0.0; 2]; 2]);
    }
    let denom = (n - 1) as f64;
    let mut c = [[0.0; 2]; 2];
    for (a, b) in d1.iter().zip(d2) {
        let (u, v) = (a - m1, b - m2);
        c[0][0] += u * u;
        c[0][1] += u * v;
        c[1][1] += v * v;
    }
    c[0][0] /= denom;
    c[0][1] /= denom;
    c[1][1] /= denom;
    c[1][0] = c[0][1];
    ([m1, m2], c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_history(a: impl Fn(i32) -> f64, b: impl Fn(i32) -> f64, xbar: f64) -> MortalityHistory {
        let ages: Vec<i32> = (55..=95).collect();
        let years: Vec<i32> = (1987..=2021).collect();
        let e = 1e5;
        let mut deaths = Vec::new();
        for &x in &ages {
            for &y in &years {
                let q = logistic(a(y) + b(y) * (x as f64 - xbar));
                // invert q = D / (E + D/2)
                deaths.push(q * e / (1.0 - 0.5 * q));
            }
        }
        let n = deaths.len();
        MortalityHistory::new(ages, years, deaths, vec![e; n]).unwrap()
    }

    #[test]
    fn static_generator_round_trip() {
        let h = exact_history(|_| -3.2, |_| 0.1, 75.0);
        let p = fit_cbd(&h, 75.0).unwrap();
        for j in 0..p.years.len() {
            assert!((p.kappa1[j] + 3.2).abs() < 1e-10);
            assert!((p.kappa2[j] - 0.1).abs() < 1e-10);
        }
        assert!(p.drift[0].abs() < 1e-10 && p.drift[1].abs() < 1e-10);
        assert!(p.cov.iter().flatten().all(|c| c.abs() < 1e-18));
    }

    #[test]
    fn time_varying_generator_round_trip() {
        let k1 = |y: i32| -3.0 - 0.02 * (y - 1987) as f64 + 0.01 * (y as f64).sin();
        let k2 = |y: i32| 0.09 + 0.0005 * (y - 1987) as f64;
        let h = exact_history(k1, k2, 75.0);
        let p = fit_cbd(&h, 75.0).unwrap();
        for (j, &y) in p.years.iter().enumerate() {
            assert!((p.kappa1[j] - k1(y)).abs() < 1e-10);
            assert!((p.kappa2[j] - k2(y)).abs() < 1e-10);
        }
        assert!(p.cov[0][0] > 0.0);
        assert_eq!(p.cov[0][1], p.cov[1][0]);
    }

    #[test]
    fn reference_age_column_is_kappa1() {
        let h = exact_history(|y| -3.0 - 0.01 * (y - 1987) as f64, |_| 0.1, 75.0);
        let p = fit_cbd(&h, 75.0).unwrap();
        for j in 0..p.years.len() {
            assert!((logit(p.q_at(75, p.kappa1[j], p.kappa2[j])) - p.kappa1[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_age_is_rank_deficient() {
        let h = MortalityHistory::new(vec![70], vec![2000, 2001], vec![10.0, 11.0], vec![1000.0, 1000.0]).unwrap();
        assert!(matches!(fit_cbd(&h, 70.0), Err(Error::Calibration(_))));
    }

    #[test]
    fn zero_q_is_rejected() {
        let h = MortalityHistory::new(vec![70, 71], vec![2000], vec![0.0, 11.0], vec![1000.0, 1000.0]).unwrap();
        assert!(fit_cbd(&h, 70.0).is_err());
    }

    #[test]
    fn singular_covariance_uses_eigen_fallback() {
        let p = CbdParams {
            ages: vec![60, 61],
            years: vec![2000],
            kappa1: vec![-3.0],
            kappa2: vec![0.1],
            drift: [0.0; 2],
            cov: [[1.0, 2.0], [2.0, 4.0]],
            xbar: 60.0,
        };
        let a = p.cov_factor().unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let v = a[r][0] * a[c][0] + a[r][1] * a[c][1];
                assert!((v - p.cov[r][c]).abs() < 1e-12);
            }
        }
    }
}
