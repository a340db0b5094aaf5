//! Learning-based resilient output regulation for continuous-time linear
//! plants whose feedback channel is subject to denial-of-service attacks.

pub mod baselines;
pub mod collect;
pub mod dos;
pub mod error;
pub mod learn;
pub mod matops;
pub mod model;
pub mod plot;
pub mod resilience;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
