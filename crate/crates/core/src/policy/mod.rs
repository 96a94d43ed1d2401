//! Sampling, estimation, guarding and stopping for CPI and MCPI.
//!
//! Both policies are pure state machines over observed rewards: each round
//! they refresh the change-point estimate, test the stopping statistic
//! against the threshold, and otherwise play either a forced-exploration arm
//! or the less-played arm next to the estimate.

mod rules;
mod run;
mod state;

pub use rules::{
    beta_threshold, estimate_change_point, exploration_radius, forced_exploration_action, gamma, guard_allows_update,
    tracking_action, z_statistic, z_statistic_at, GuardRule,
};
pub use run::{
    run_cpi, run_cpi_observed, run_mcpi, run_mcpi_observed, run_oracle_tracking, run_oracle_tracking_observed,
    PolicyConfig, RoundObserver, RoundRecord, RunResult, TrajectoryCsv, DEFAULT_STEP_CAP,
};
pub use state::RunState;
