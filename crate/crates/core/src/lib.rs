//! Knowledge-base reasoning as a Bayesian MDP: environment, agents, loops and
//! regret analysis.

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod loops;
pub mod mdp;
pub mod seed;

pub use error::{Error, Result};
