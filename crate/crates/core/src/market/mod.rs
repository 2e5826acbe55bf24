//! Market path generation: correlated Kou jump-diffusions for the synthetic
//! market and a stationary block bootstrap of monthly historical returns.

mod kou;
mod panel;
mod pathset;
mod stats;

pub use kou::{simulate_kou, KouMarket, KouParams};
pub use panel::{
    bootstrap_paths, bootstrap_paths_instrumented, load_panel, AssetPanel, AssetSummary, PanelSummary,
};
pub use pathset::{PathSet, PathSetSidecar};
pub use stats::{path_stats, PathStats};

use crate::error::Result;

#[derive(Debug, Clone)]
pub enum MarketModel {
    Kou(KouMarket),
    Bootstrap { panel: AssetPanel, expected_block_len: f64 },
}

impl MarketModel {
    pub fn simulate(&self, years: usize, n_paths: usize, seed: u64) -> Result<PathSet> {
        match self {
            MarketModel::Kou(m) => simulate_kou(m, years, n_paths, seed),
            MarketModel::Bootstrap {
                panel,
                expected_block_len,
            } => bootstrap_paths(panel, *expected_block_len, years, n_paths, seed),
        }
    }

    pub fn asset_names(&self) -> Vec<String> {
        match self {
            MarketModel::Kou(m) => m.names.clone(),
            MarketModel::Bootstrap { panel, .. } => panel.asset_names.clone(),
        }
    }
}
