use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PathSet;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Double-exponential jump-diffusion parameters, annualised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KouParams {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub zeta: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl KouParams {
    pub const STOCK: KouParams = KouParams {
        mu: 0.08912,
        sigma: 0.1460,
        lambda: 0.3263,
        zeta: 0.2258,
        eta1: 4.3625,
        eta2: 5.5335,
    };

    pub const BOND: KouParams = KouParams {
        mu: 0.00460,
        sigma: 0.0130,
        lambda: 0.5053,
        zeta: 0.3958,
        eta1: 65.801,
        eta2: 57.793,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu.is_finite()
            && self.sigma >= 0.0
            && self.lambda >= 0.0
            && (0.0..=1.0).contains(&self.zeta)
            && self.eta1 > 1.0
            && self.eta2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "Kou parameters need sigma >= 0, lambda >= 0, zeta in [0,1], eta1 > 1, eta2 > 0: {self:?}"
            )))
        }
    }

    /// Jump compensator `kappa = E[e^Y] - 1`.
    pub fn kappa(&self) -> f64 {
        self.zeta * self.eta1 / (self.eta1 - 1.0) + (1.0 - self.zeta) * self.eta2 / (self.eta2 + 1.0) - 1.0
    }

    /// Mean jump log-size `E[Y]`.
    pub fn mean_jump(&self) -> f64 {
        self.zeta / self.eta1 - (1.0 - self.zeta) / self.eta2
    }

    /// Variance of the jump log-size.
    pub fn var_jump(&self) -> f64 {
        let second = 2.0 * self.zeta / (self.eta1 * self.eta1) + 2.0 * (1.0 - self.zeta) / (self.eta2 * self.eta2);
        second - self.mean_jump().powi(2)
    }

    /// `E[ln S(t+1)/S(t)]`, including the jump mean.
    pub fn expected_log_growth(&self) -> f64 {
        self.mu - self.lambda * self.kappa() - 0.5 * self.sigma * self.sigma + self.lambda * self.mean_jump()
    }

    /// `Var[ln S(t+1)/S(t)]` over one year.
    pub fn log_growth_variance(&self) -> f64 {
        let ey = self.mean_jump();
        self.sigma * self.sigma + self.lambda * (self.var_jump() + ey * ey)
    }
}

/// Correlated Kou assets with independent jump processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KouMarket {
    pub names: Vec<String>,
    pub assets: Vec<KouParams>,
    /// Correlation of the Brownian drivers, row-major `k x k`.
    pub corr: Vec<Vec<f64>>,
    pub steps_per_year: usize,
}

impl KouMarket {
    pub fn single(name: &str, params: KouParams, steps_per_year: usize) -> Self {
        Self {
            names: vec![name.to_string()],
            assets: vec![params],
            corr: vec![vec![1.0]],
            steps_per_year,
        }
    }

    pub fn stock_bond(stock: KouParams, bond: KouParams, rho_sb: f64, steps_per_year: usize) -> Self {
        Self {
            names: vec!["stock".into(), "bond".into()],
            assets: vec![stock, bond],
            corr: vec![vec![1.0, rho_sb], vec![rho_sb, 1.0]],
            steps_per_year,
        }
    }

    /// The calibrated two-asset synthetic market with monthly substeps.
    pub fn calibrated() -> Self {
        Self::stock_bond(KouParams::STOCK, KouParams::BOND, 0.08420, 12)
    }

    fn cholesky(&self) -> Result<DMatrix<f64>> {
        let k = self.assets.len();
        if k == 0 || self.corr.len() != k || self.corr.iter().any(|r| r.len() != k) || self.names.len() != k {
            return Err(Error::Dimension(format!(
                "market with {k} assets needs {k} names and a {k}x{k} correlation matrix"
            )));
        }
        for p in &self.assets {
            p.validate()?;
        }
        if self.steps_per_year == 0 {
            return Err(Error::Validation("steps_per_year must be at least 1".into()));
        }
        for i in 0..k {
            for j in 0..k {
                let c = self.corr[i][j];
                if !(-1.0..=1.0).contains(&c) || (c - self.corr[j][i]).abs() > 1e-12 || (i == j && c != 1.0) {
                    return Err(Error::Validation(format!("invalid correlation entry ({i}, {j}) = {c}")));
                }
            }
        }
        let m = DMatrix::from_fn(k, k, |i, j| self.corr[i][j]);
        if let Some(ch) = m.clone().cholesky() {
            return Ok(ch.l());
        }
        // perfectly correlated drivers: factor via the eigen-decomposition
        let eig = m.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| v < -1e-12) {
            return Err(Error::Validation("correlation matrix is not positive semidefinite".into()));
        }
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        Ok(&eig.eigenvectors * d)
    }
}

struct AssetSampler {
    drift_dt: f64,
    vol_sqrt_dt: f64,
    jumps: Option<Poisson<f64>>,
    zeta: f64,
    up: Exp<f64>,
    down: Exp<f64>,
}

impl AssetSampler {
    fn new(p: &KouParams, dt: f64) -> Result<Self> {
        let jumps = if p.lambda > 0.0 {
            Some(Poisson::new(p.lambda * dt).map_err(|e| Error::Validation(format!("jump intensity: {e}")))?)
        } else {
            None
        };
        let exp = |rate: f64| Exp::new(rate).map_err(|e| Error::Validation(format!("jump decay: {e}")));
        Ok(Self {
            drift_dt: (p.mu - p.lambda * p.kappa() - 0.5 * p.sigma * p.sigma) * dt,
            vol_sqrt_dt: p.sigma * dt.sqrt(),
            jumps,
            zeta: p.zeta,
            up: exp(p.eta1)?,
            down: exp(p.eta2)?,
        })
    }

    fn jump_sum<R: Rng>(&self, rng: &mut R) -> f64 {
        let Some(pois) = &self.jumps else { return 0.0 };
        let n = pois.sample(rng) as u64;
        let mut total = 0.0;
        for _ in 0..n {
            let u: f64 = rng.random();
            total += if u < self.zeta { self.up.sample(rng) } else { -self.down.sample(rng) };
        }
        total
    }
}

/// Yearly gross real returns for `n_paths` paths over `years` periods.
///
/// Each substep of length `1 / steps_per_year` adds
/// `(mu - lambda kappa - sigma^2 / 2) dt + sigma sqrt(dt) Z + sum of jumps`
/// to the log price. CPI is held at 1.
pub fn simulate_kou(market: &KouMarket, years: usize, n_paths: usize, seed: u64) -> Result<PathSet> {
    let chol = market.cholesky()?;
    let k = market.assets.len();
    let steps = market.steps_per_year;
    let dt = 1.0 / steps as f64;
    let samplers = market
        .assets
        .iter()
        .map(|p| AssetSampler::new(p, dt))
        .collect::<Result<Vec<_>>>()?;

    let per_path: Vec<Result<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = rng::stream(seed, Stream::Market, path as u64);
            let mut out = Vec::with_capacity(years * k);
            let mut z = vec![0.0; k];
            let mut log_ret = vec![0.0; k];
            for period in 0..years {
                log_ret.iter_mut().for_each(|v| *v = 0.0);
                for _ in 0..steps {
                    for zi in z.iter_mut() {
                        *zi = rng.sample(StandardNormal);
                    }
                    for a in 0..k {
                        let mut w = 0.0;
                        for b in 0..k {
                            w += chol[(a, b)] * z[b];
                        }
                        let s = &samplers[a];
                        log_ret[a] += s.drift_dt + s.vol_sqrt_dt * w + s.jump_sum(&mut rng);
                    }
                }
                for (a, &lr) in log_ret.iter().enumerate() {
                    let g = lr.exp();
                    if !g.is_finite() || g <= 0.0 {
                        return Err(Error::Simulation {
                            path,
                            period,
                            msg: format!("asset {} gross return {g}", market.names[a]),
                        });
                    }
                    out.push(g);
                }
            }
            Ok(out)
        })
        .collect();

    let mut gross = Vec::with_capacity(n_paths * years * k);
    for p in per_path {
        gross.extend(p?);
    }
    PathSet::new(
        n_paths,
        years,
        market.names.clone(),
        gross,
        vec![1.0; n_paths * (years + 1)],
        seed,
        format!("kou:{}", serde_json::to_string(market)?),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stock_compensator_matches_hand_value() {
        // 30-digit evaluation of 0.2258*4.3625/3.3625 + 0.7742*5.5335/6.5335 - 1
        let k = KouParams::STOCK.kappa();
        assert!((k - (-0.051_344_560_761_053_34)).abs() < 1e-14, "{k}");
        assert!((k + 0.05133).abs() < 1e-4);
    }

    #[test]
    fn deterministic_drift_limit() {
        let p = KouParams {
            mu: 0.07,
            sigma: 0.0,
            lambda: 0.0,
            ..KouParams::STOCK
        };
        let ps = simulate_kou(&KouMarket::single("s", p, 12), 3, 4, 1).unwrap();
        for v in &ps.gross {
            assert!((v - 0.07f64.exp()).abs() < 1e-14);
        }
        assert!(ps.cpi.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let m = KouMarket::calibrated();
        let a = simulate_kou(&m, 5, 16, 3).unwrap();
        let b = simulate_kou(&m, 5, 16, 3).unwrap();
        let c = simulate_kou(&m, 5, 16, 4).unwrap();
        assert_eq!(a.gross, b.gross);
        assert_ne!(a.gross, c.gross);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = KouParams { eta1: 0.9, ..KouParams::STOCK };
        assert!(simulate_kou(&KouMarket::single("s", p, 12), 1, 1, 0).is_err());
        let m = KouMarket::stock_bond(KouParams::STOCK, KouParams::BOND, 1.2, 12);
        assert!(simulate_kou(&m, 1, 1, 0).is_err());
    }

    #[test]
    fn perfect_correlation_is_allowed() {
        let p = KouParams { lambda: 0.0, ..KouParams::STOCK };
        let m = KouMarket::stock_bond(p, p, 1.0, 12);
        let ps = simulate_kou(&m, 2, 8, 0).unwrap();
        for n in 0..8 {
            for t in 0..2 {
                let g = ps.gross_at(n, t);
                assert!((g[0] - g[1]).abs() < 1e-12);
            }
        }
    }
}
