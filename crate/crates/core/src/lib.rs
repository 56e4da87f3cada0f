//! Contextual policy search with factored contexts.
//!
//! Contexts split into a target part, which only enters the reward, and an
//! environment part, which drives the dynamics. Past rollouts can then be
//! re-scored for any new target without re-simulating, which the factored
//! learners (`BoFcps`, `Faces`) exploit.

pub mod acquisition;
pub mod algorithms;
pub mod error;
pub mod experience;
pub mod gp;
pub mod harness;
pub mod optim;
pub mod sim;

pub use error::{Error, Result};
