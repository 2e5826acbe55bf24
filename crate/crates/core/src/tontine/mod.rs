//! Tontine account recursion and pool-level credit machinery.

mod account;
mod pool;
mod scenario;

pub use account::{
    apply_credit_and_fee, check_simplex, effective_gain, next_wealth, step_account, withdrawal_bounds, AccountState,
    SIMPLEX_TOL,
};
pub use pool::{pool_credits, small_bias_check, GroupGainMode, PoolCredits, PoolState, SmallBiasReport};
pub use scenario::ScenarioConfig;
