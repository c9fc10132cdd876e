use thiserror::Error;

use crate::options::OptionPolicy;

/// Errors raised by model construction, solvers and planners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid model: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("no proper policy reaches the goal from state {state}{}", sample.map(|q| format!(" in sample {q}")).unwrap_or_default())]
    NoProperPolicy { sample: Option<usize>, state: usize },

    #[error("policy is improper at state {state}")]
    ImproperPolicy { state: usize },

    #[error("value iteration diverged after {iterations} iterations (residual {residual:e} at state {state})")]
    Divergence {
        state: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("planner did not converge within {sweeps} sweeps (last delta {delta:e})")]
    NonConvergence { sweeps: usize, delta: f64 },

    #[error("option search exceeded {budget} nodes at anchor {anchor} (incumbent objective {objective})")]
    BudgetExceeded {
        anchor: usize,
        budget: u64,
        objective: f64,
        incumbent: Box<OptionPolicy>,
    },

    #[error("time limit exceeded")]
    Timeout,

    #[error("option plan has no action for state {state} at step {step} of the option anchored at {anchor}")]
    Coverage {
        anchor: usize,
        state: usize,
        step: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
