//! Policy evaluation, over-approximation bounds, statistics and experiments.

mod bounds;
mod chain;
mod experiment;
pub use experiment::MethodSummary;
mod stats;

pub use bounds::{bound_constants, horizon_estimate, adversary_gap_bound, BoundConstants, Witness};
pub use chain::{
    adversarial_hitting_times, adversary_value, evaluate_option_plan, evaluate_option_plan_from, max_hitting_time,
    max_regret, plan_hitting_time, policy_value, stationary_max_regret, Coverage, PolicyRef, RegretProfile,
};
pub use experiment::{
    normalize, read_results, run_experiment, run_instance, summarize, write_results, ExperimentConfig,
    ExperimentOutput, MethodSpec, ResultRow, Status, Summary,
};
pub use stats::{mean, std_dev, welch_statistic, welch_t_test};
