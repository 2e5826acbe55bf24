//! Risk estimators, policy rollouts, the constant-weight benchmark and
//! reporting exports.

mod benchmark;
mod heatmap;
mod risk;
mod rollout;

pub use benchmark::{benchmark_search, simplex_grid, write_benchmark_csv, BenchmarkResult};
pub use heatmap::{
    decision_times, default_wealth_grid, export_heatmap, wealth_percentiles, write_percentiles_csv, Heatmap,
    Percentiles,
};
pub use risk::{
    empirical_var_cvar, percentile_sorted, rockafellar_max, rockafellar_objective, tail_count, upper_tail_mean,
};
pub use rollout::{rollout, Controller, RolloutResult};
pub(crate) use rollout::check_dims;
