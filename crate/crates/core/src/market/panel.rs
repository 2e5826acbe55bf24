use std::io::Read;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PathSet;
use crate::error::{Error, Result};
use crate::eval::empirical_var_cvar;
use crate::rng::{self, Stream};

/// Monthly real returns of several assets plus monthly CPI relative changes,
/// on a contiguous month grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetPanel {
    /// `(year, month)` with month in `1..=12`.
    pub dates: Vec<(i32, u32)>,
    pub asset_names: Vec<String>,
    /// Month-major: `returns[t][a]`.
    pub returns: Vec<Vec<f64>>,
    pub cpi_change: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSummary {
    pub name: String,
    pub mean_ann: f64,
    pub geo_mean_ann: f64,
    pub vol_ann: f64,
    pub var_05_monthly: f64,
    pub cvar_05_monthly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub rows: usize,
    pub first: (i32, u32),
    pub last: (i32, u32),
    pub assets: Vec<AssetSummary>,
    /// Correlation of monthly returns, asset order as above.
    pub correlation: Vec<Vec<f64>>,
}

fn parse_date(s: &str, line: usize) -> Result<(i32, u32)> {
    let parts: Vec<&str> = s.split(['-', '/', ':']).collect();
    let bad = || Error::Parse {
        line,
        msg: format!("invalid date `{s}` (expected YYYY-MM or YYYY-MM-DD)"),
    };
    if parts.len() < 2 {
        return Err(bad());
    }
    let y: i32 = parts[0].trim().parse().map_err(|_| bad())?;
    let m: u32 = parts[1].trim().parse().map_err(|_| bad())?;
    if !(1..=12).contains(&m) {
        return Err(bad());
    }
    Ok((y, m))
}

fn month_index((y, m): (i32, u32)) -> i64 {
    y as i64 * 12 + m as i64 - 1
}

impl AssetPanel {
    pub fn new(dates: Vec<(i32, u32)>, asset_names: Vec<String>, returns: Vec<Vec<f64>>, cpi_change: Vec<f64>) -> Result<Self> {
        let n = dates.len();
        if returns.len() != n || cpi_change.len() != n {
            return Err(Error::Dimension(format!(
                "{n} dates, {} return rows, {} CPI entries",
                returns.len(),
                cpi_change.len()
            )));
        }
        if n == 0 {
            return Err(Error::Validation("empty panel".into()));
        }
        for (t, row) in returns.iter().enumerate() {
            if row.len() != asset_names.len() {
                return Err(Error::Dimension(format!("row {t} has {} assets", row.len())));
            }
            if let Some(r) = row.iter().find(|r| !(1.0 + **r > 0.0) || !r.is_finite()) {
                return Err(Error::Validation(format!(
                    "gross return 1 + {r} is not positive in {}-{:02}",
                    dates[t].0, dates[t].1
                )));
            }
            if !(1.0 + cpi_change[t] > 0.0) || !cpi_change[t].is_finite() {
                return Err(Error::Validation(format!(
                    "CPI factor 1 + {} is not positive in {}-{:02}",
                    cpi_change[t], dates[t].0, dates[t].1
                )));
            }
        }
        for (t, w) in dates.windows(2).enumerate() {
            let step = month_index(w[1]) - month_index(w[0]);
            if step != 1 {
                let what = if step == 0 { "duplicate month" } else { "missing or unordered months" };
                return Err(Error::Gap {
                    line: t + 3,
                    msg: format!("{what} between {}-{:02} and {}-{:02}", w[0].0, w[0].1, w[1].0, w[1].1),
                });
            }
        }
        Ok(Self {
            dates,
            asset_names,
            returns,
            cpi_change,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn summary(&self) -> Result<PanelSummary> {
        let n = self.len() as f64;
        let k = self.asset_names.len();
        let col = |a: usize| -> Vec<f64> { self.returns.iter().map(|r| r[a]).collect() };
        let mut assets = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut sds = Vec::with_capacity(k);
        for a in 0..k {
            let x = col(a);
            let mean = x.iter().sum::<f64>() / n;
            let var = if x.len() > 1 {
                x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let log_sum: f64 = x.iter().map(|r| r.ln_1p()).sum();
            let (var05, cvar05) = empirical_var_cvar(&x, 0.05)?;
            assets.push(AssetSummary {
                name: self.asset_names[a].clone(),
                mean_ann: 12.0 * mean,
                geo_mean_ann: (12.0 * log_sum / n).exp_m1(),
                vol_ann: (12.0 * var).sqrt(),
                var_05_monthly: var05,
                cvar_05_monthly: cvar05,
            });
            means.push(mean);
            sds.push(var.sqrt());
        }
        let mut correlation = vec![vec![0.0; k]; k];
        for a in 0..k {
            for b in 0..k {
                correlation[a][b] = if a == b {
                    1.0
                } else if sds[a] > 0.0 && sds[b] > 0.0 {
                    let cov = self
                        .returns
                        .iter()
                        .map(|r| (r[a] - means[a]) * (r[b] - means[b]))
                        .sum::<f64>()
                        / (n - 1.0);
                    cov / (sds[a] * sds[b])
                } else {
                    0.0
                };
            }
        }
        Ok(PanelSummary {
            rows: self.len(),
            first: self.dates[0],
            last: *self.dates.last().unwrap(),
            assets,
            correlation,
        })
    }
}

/// Reads `date,<asset1>,...,<assetk>,cpi` with simple monthly real returns
/// and monthly CPI relative changes.
pub fn load_panel(source: impl Read) -> Result<AssetPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.len() < 3
        || !headers[0].eq_ignore_ascii_case("date")
        || !headers.last().unwrap().eq_ignore_ascii_case("cpi")
    {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header date,<asset1>,...,<assetk>,cpi".into(),
        });
    }
    let k = headers.len() - 2;
    let mut dates = Vec::new();
    let mut returns = Vec::new();
    let mut cpi = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != k + 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", k + 2, rec.len()),
            });
        }
        dates.push(parse_date(&rec[0], line)?);
        let mut row = Vec::with_capacity(k);
        for j in 0..=k {
            let v: f64 = rec[j + 1].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid number `{}` in column `{}`", &rec[j + 1], headers[j + 1]),
            })?;
            if j < k {
                row.push(v);
            } else {
                cpi.push(v);
            }
        }
        returns.push(row);
    }
    AssetPanel::new(dates, headers[1..=k].to_vec(), returns, cpi)
}

/// Stationary block bootstrap with circular wraparound. Returns the path set
/// and, when `record_indices` is set, the drawn row index for every path and
/// month (`n_paths x 12 years`).
pub fn bootstrap_paths_instrumented(
    panel: &AssetPanel,
    expected_block_len: f64,
    years: usize,
    n_paths: usize,
    seed: u64,
    record_indices: bool,
) -> Result<(PathSet, Option<Vec<u32>>)> {
    if !(expected_block_len >= 1.0) {
        return Err(Error::Validation(format!(
            "expected block length {expected_block_len} must be at least one month"
        )));
    }
    let rows = panel.len();
    if rows == 0 {
        return Err(Error::Validation("empty panel".into()));
    }
    let k = panel.asset_names.len();
    let months = 12 * years;
    let restart = 1.0 / expected_block_len;

    let per_path: Vec<(Vec<f64>, Vec<f64>, Vec<u32>)> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = rng::stream(seed, Stream::Market, path as u64);
            let mut idx = rng.random_range(0..rows);
            let mut gross = Vec::with_capacity(years * k);
            let mut cpi = Vec::with_capacity(years + 1);
            let mut drawn = if record_indices { Vec::with_capacity(months) } else { Vec::new() };
            cpi.push(1.0);
            let mut level = 1.0;
            for _ in 0..years {
                let mut g = vec![1.0; k];
                for _ in 0..12 {
                    if record_indices {
                        drawn.push(idx as u32);
                    }
                    for (a, ga) in g.iter_mut().enumerate() {
                        *ga *= 1.0 + panel.returns[idx][a];
                    }
                    level *= 1.0 + panel.cpi_change[idx];
                    let u: f64 = rng.random();
                    idx = if u < restart { rng.random_range(0..rows) } else { (idx + 1) % rows };
                }
                gross.extend_from_slice(&g);
                cpi.push(level);
            }
            (gross, cpi, drawn)
        })
        .collect();

    let mut gross = Vec::with_capacity(n_paths * years * k);
    let mut cpi = Vec::with_capacity(n_paths * (years + 1));
    let mut indices = record_indices.then(|| Vec::with_capacity(n_paths * months));
    for (g, c, d) in per_path {
        gross.extend(g);
        cpi.extend(c);
        if let Some(ix) = indices.as_mut() {
            ix.extend(d);
        }
    }
    let source = format!(
        "bootstrap:rows={rows},first={}-{:02},block={expected_block_len}",
        panel.dates[0].0, panel.dates[0].1
    );
    let ps = PathSet::new(n_paths, years, panel.asset_names.clone(), gross, cpi, seed, source)?;
    Ok((ps, indices))
}

pub fn bootstrap_paths(panel: &AssetPanel, expected_block_len: f64, years: usize, n_paths: usize, seed: u64) -> Result<PathSet> {
    Ok(bootstrap_paths_instrumented(panel, expected_block_len, years, n_paths, seed, false)?.0)
}
