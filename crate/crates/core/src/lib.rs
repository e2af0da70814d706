//! Constrained mean-field control.
//!
//! Building blocks for controlling a large population of exchangeable agents
//! under a discounted cost constraint: probability simplices, environment
//! models, the deterministic mean-field map, a finite-population simulator,
//! softmax policies, geometric-horizon sampling, a natural policy gradient
//! primal-dual solver and closed-form approximation widths.

pub mod bounds;
pub mod checks;
pub mod envmodel;
pub mod error;
pub mod meanfield;
pub mod nagent;
pub mod npgpd;
pub mod policy;
pub mod rng;
pub mod sampler;
pub mod simplex;

pub use error::{Error, Result};
