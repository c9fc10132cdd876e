//! Minimax-regret planning for uncertain stochastic shortest path problems.

pub mod domains;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod options;
pub mod planners;
pub mod solve;
pub mod verify;

pub use error::{Error, Result};
