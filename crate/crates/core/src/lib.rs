//! Distribution functions and densities of first-passage times and reward
//! integrals of general birth-death processes.
//!
//! Transition-probability transforms are continued fractions evaluated by
//! the modified Lentz method, and are inverted numerically with an explicit
//! error budget. Reward integrals `∫₀^τ g(X(t)) dt` reduce to first passage
//! times of a chain with rates divided by `g`.

pub mod contfrac;
pub mod error;
pub mod laplace;
pub mod mc;
pub mod modelspec;
pub mod passage;
pub mod reward;
pub mod search;

pub use error::{Error, ModelError, NumericError, Result};
