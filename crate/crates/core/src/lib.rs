//! Goal-conditioned supervised learning (GCSL) and its sub-goal extension
//! TraIL, built from scratch: grid and continuous goal environments, dense
//! networks with mixture-density heads, hindsight replay, training loops and
//! evaluation harnesses.

pub mod env;
pub mod error;
pub mod gcsl;
pub mod nn;
pub mod replay;
pub mod runner;
pub mod trail;

pub use error::{Error, Result};
