use serde::{Deserialize, Serialize};

use super::PathSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub asset_names: Vec<String>,
    /// Mean of `R - 1` per period.
    pub mean_ann: Vec<f64>,
    /// Mean of `ln R` per period.
    pub mean_log_ann: Vec<f64>,
    /// Standard error of `mean_log_ann`.
    pub mean_log_se: Vec<f64>,
    /// Standard deviation of `ln R` per period.
    pub vol_ann: Vec<f64>,
    /// Correlation of per-period log returns.
    pub correlation: Vec<Vec<f64>>,
    /// `true` where a correlation entry was undefined (zero variance) and
    /// reported as 0.
    pub correlation_undefined: Vec<Vec<bool>>,
    /// Mean over paths of `ln(CPI_M / CPI_0) / M`.
    pub cpi_drift: f64,
}

pub fn path_stats(paths: &PathSet) -> Result<PathStats> {
    let n_obs = paths.n_paths * paths.n_periods;
    if n_obs == 0 {
        return Err(Error::Validation("empty path set".into()));
    }
    let k = paths.n_assets;
    let nf = n_obs as f64;
    let mut mean = vec![0.0; k];
    let mut mean_log = vec![0.0; k];
    for n in 0..paths.n_paths {
        for m in 0..paths.n_periods {
            for (a, g) in paths.gross_at(n, m).iter().enumerate() {
                mean[a] += g - 1.0;
                mean_log[a] += g.ln();
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= nf);
    mean_log.iter_mut().for_each(|v| *v /= nf);

    let mut cov = vec![vec![0.0; k]; k];
    for n in 0..paths.n_paths {
        for m in 0..paths.n_periods {
            let g = paths.gross_at(n, m);
            for a in 0..k {
                let da = g[a].ln() - mean_log[a];
                for b in a..k {
                    cov[a][b] += da * (g[b].ln() - mean_log[b]);
                }
            }
        }
    }
    let denom = (nf - 1.0).max(1.0);
    for a in 0..k {
        for b in a..k {
            cov[a][b] /= denom;
            cov[b][a] = cov[a][b];
        }
    }
    let vol: Vec<f64> = (0..k).map(|a| cov[a][a].sqrt()).collect();
    let mut correlation = vec![vec![0.0; k]; k];
    let mut undefined = vec![vec![false; k]; k];
    for a in 0..k {
        for b in 0..k {
            if vol[a] > 0.0 && vol[b] > 0.0 {
                correlation[a][b] = (cov[a][b] / (vol[a] * vol[b])).clamp(-1.0, 1.0);
            } else {
                undefined[a][b] = true;
            }
        }
    }
    let cpi_drift = if paths.n_periods == 0 {
        0.0
    } else {
        (0..paths.n_paths)
            .map(|n| paths.cpi_path(n)[paths.n_periods].ln())
            .sum::<f64>()
            / (paths.n_paths as f64 * paths.n_periods as f64)
    };
    Ok(PathStats {
        asset_names: paths.asset_names.clone(),
        mean_ann: mean,
        mean_log_ann: mean_log,
        mean_log_se: vol.iter().map(|v| v / nf.sqrt()).collect(),
        vol_ann: vol,
        correlation,
        correlation_undefined: undefined,
        cpi_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_paths_flag_undefined_correlation() {
        let ps = PathSet::new(3, 2, vec!["a".into(), "b".into()], vec![1.05; 12], vec![1.0; 9], 0, String::new()).unwrap();
        let s = path_stats(&ps).unwrap();
        assert_eq!(s.vol_ann, vec![0.0, 0.0]);
        assert!((s.mean_log_ann[0] - 1.05f64.ln()).abs() < 1e-15);
        assert_eq!(s.correlation[0][1], 0.0);
        assert!(s.correlation_undefined[0][1]);
    }

    #[test]
    fn perfectly_correlated_columns() {
        let mut gross = Vec::new();
        for i in 0..50 {
            let g = 1.0 + 0.01 * ((i * 37 % 17) as f64 - 8.0);
            gross.push(g);
            gross.push(g);
        }
        let ps = PathSet::new(5, 10, vec!["a".into(), "b".into()], gross, vec![1.0; 55], 0, String::new()).unwrap();
        let s = path_stats(&ps).unwrap();
        assert!((s.correlation[0][1] - 1.0).abs() < 1e-12);
    }
}
