//! Bayesian Flow Networks viewed as linear SDEs: schedules, forward
//! processes, losses, samplers and the checks that tie them together.

pub mod error;
pub mod forward;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod predictors;
pub mod rng;
pub mod samplers_cont;
pub mod samplers_disc;
pub mod schedules;
pub mod tensor;

pub use error::{BfnError, Result};
