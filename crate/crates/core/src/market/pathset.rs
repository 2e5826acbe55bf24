use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mortality::DeathProbPaths;

/// Realised market and mortality drivers shared by training, evaluation and
/// pricing.
///
/// `gross` is stored path-major as `n_paths x n_periods x n_assets`; `cpi` as
/// `n_paths x (n_periods + 1)` with a leading 1 on every path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub n_paths: usize,
    pub n_periods: usize,
    pub n_assets: usize,
    pub asset_names: Vec<String>,
    pub gross: Vec<f64>,
    pub cpi: Vec<f64>,
    pub deltas: Option<DeathProbPaths>,
    pub seed: u64,
    /// Free-form description of the generating model.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSetSidecar {
    pub n_paths: usize,
    pub n_periods: usize,
    pub n_assets: usize,
    pub asset_names: Vec<String>,
    pub seed: u64,
    pub source: String,
    pub has_deltas: bool,
    pub x0: Option<i32>,
    pub y0: Option<i32>,
    pub clamped: usize,
    pub sha256: String,
}

impl PathSet {
    pub fn new(
        n_paths: usize,
        n_periods: usize,
        asset_names: Vec<String>,
        gross: Vec<f64>,
        cpi: Vec<f64>,
        seed: u64,
        source: String,
    ) -> Result<Self> {
        let n_assets = asset_names.len();
        if gross.len() != n_paths * n_periods * n_assets {
            return Err(Error::Dimension(format!(
                "gross has {} entries, expected {n_paths} x {n_periods} x {n_assets}",
                gross.len()
            )));
        }
        if cpi.len() != n_paths * (n_periods + 1) {
            return Err(Error::Dimension(format!(
                "cpi has {} entries, expected {n_paths} x {}",
                cpi.len(),
                n_periods + 1
            )));
        }
        if let Some(i) = gross.iter().position(|g| !(*g > 0.0) || !g.is_finite()) {
            let per_path = n_periods * n_assets;
            return Err(Error::Simulation {
                path: i / per_path.max(1),
                period: (i % per_path.max(1)) / n_assets.max(1),
                msg: format!("gross return {} is not positive and finite", gross[i]),
            });
        }
        for n in 0..n_paths {
            let row = &cpi[n * (n_periods + 1)..(n + 1) * (n_periods + 1)];
            if row[0] != 1.0 || row.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
                return Err(Error::Validation(format!(
                    "cpi index on path {n} must start at 1 and stay positive"
                )));
            }
        }
        Ok(Self {
            n_paths,
            n_periods,
            n_assets,
            asset_names,
            gross,
            cpi,
            deltas: None,
            seed,
            source,
        })
    }

    /// Gross returns of every asset over period `m` on path `n`.
    #[inline]
    pub fn gross_at(&self, n: usize, m: usize) -> &[f64] {
        let i = (n * self.n_periods + m) * self.n_assets;
        &self.gross[i..i + self.n_assets]
    }

    /// CPI index `CPI_0 = 1, ..., CPI_M` on path `n`.
    #[inline]
    pub fn cpi_path(&self, n: usize) -> &[f64] {
        &self.cpi[n * (self.n_periods + 1)..(n + 1) * (self.n_periods + 1)]
    }

    /// Death probabilities on path `n`, if mortality has been attached.
    #[inline]
    pub fn delta_path(&self, n: usize) -> Option<&[f64]> {
        self.deltas.as_ref().map(|d| d.row(n))
    }

    pub fn attach_mortality(mut self, deltas: DeathProbPaths) -> Result<Self> {
        if deltas.k_paths != self.n_paths || deltas.horizon != self.n_periods {
            return Err(Error::Dimension(format!(
                "death probabilities are {} x {}, paths are {} x {}",
                deltas.k_paths, deltas.horizon, self.n_paths, self.n_periods
            )));
        }
        if let Some(d) = deltas.delta.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(Error::Domain(format!("death probability {d} outside [0, 1)")));
        }
        self.deltas = Some(deltas);
        Ok(self)
    }

    /// Paths `range` as a new set.
    pub fn slice_paths(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.n_paths || range.start > range.end {
            return Err(Error::Dimension(format!("path range {range:?} outside 0..{}", self.n_paths)));
        }
        let per = self.n_periods * self.n_assets;
        let mut out = Self::new(
            range.len(),
            self.n_periods,
            self.asset_names.clone(),
            self.gross[range.start * per..range.end * per].to_vec(),
            self.cpi[range.start * (self.n_periods + 1)..range.end * (self.n_periods + 1)].to_vec(),
            self.seed,
            self.source.clone(),
        )?;
        if let Some(d) = &self.deltas {
            let mut sub = d.clone();
            sub.delta = d.delta[range.start * d.horizon..range.end * d.horizon].to_vec();
            sub.k_paths = range.len();
            out.deltas = Some(sub);
        }
        Ok(out)
    }

    fn payload(&self) -> Vec<u8> {
        let n_delta = self.deltas.as_ref().map_or(0, |d| d.delta.len());
        let mut buf = Vec::with_capacity(8 * (self.gross.len() + self.cpi.len() + n_delta));
        for v in self.gross.iter().chain(&self.cpi) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(d) = &self.deltas {
            for v in &d.delta {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    /// SHA-256 over the dimensions and the binary payload.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in [self.n_paths, self.n_periods, self.n_assets] {
            h.update((d as u64).to_le_bytes());
        }
        h.update([self.deltas.is_some() as u8]);
        h.update(self.payload());
        hex::encode(h.finalize())
    }

    pub fn sidecar(&self) -> PathSetSidecar {
        PathSetSidecar {
            n_paths: self.n_paths,
            n_periods: self.n_periods,
            n_assets: self.n_assets,
            asset_names: self.asset_names.clone(),
            seed: self.seed,
            source: self.source.clone(),
            has_deltas: self.deltas.is_some(),
            x0: self.deltas.as_ref().map(|d| d.x0),
            y0: self.deltas.as_ref().map(|d| d.y0),
            clamped: self.deltas.as_ref().map_or(0, |d| d.clamped),
            sha256: self.content_hash(),
        }
    }

    /// Writes `<stem>.bin` (little-endian f64: gross, cpi, then deltas) and
    /// `<stem>.json`. Returns both paths.
    pub fn save(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        fs::File::create(&bin)?.write_all(&self.payload())?;
        fs::write(&json, serde_json::to_string_pretty(&self.sidecar())?)?;
        Ok((bin, json))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let meta: PathSetSidecar = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        let bytes = fs::read(stem.with_extension("bin"))?;
        let n_gross = meta.n_paths * meta.n_periods * meta.n_assets;
        let n_cpi = meta.n_paths * (meta.n_periods + 1);
        let n_delta = if meta.has_deltas { meta.n_paths * meta.n_periods } else { 0 };
        if bytes.len() != 8 * (n_gross + n_cpi + n_delta) {
            return Err(Error::Dimension(format!(
                "path file has {} bytes, sidecar implies {}",
                bytes.len(),
                8 * (n_gross + n_cpi + n_delta)
            )));
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut ps = Self::new(
            meta.n_paths,
            meta.n_periods,
            meta.asset_names.clone(),
            vals[..n_gross].to_vec(),
            vals[n_gross..n_gross + n_cpi].to_vec(),
            meta.seed,
            meta.source.clone(),
        )?;
        if meta.has_deltas {
            ps = ps.attach_mortality(DeathProbPaths {
                delta: vals[n_gross + n_cpi..].to_vec(),
                k_paths: meta.n_paths,
                horizon: meta.n_periods,
                x0: meta.x0.unwrap_or_default(),
                y0: meta.y0.unwrap_or_default(),
                clamped: meta.clamped,
            })?;
        }
        if ps.content_hash() != meta.sha256 {
            return Err(Error::Validation("path file does not match its sidecar hash".into()));
        }
        Ok(ps)
    }
}
