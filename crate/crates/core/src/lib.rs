//! Exact tabular-MDP toolkit for monotonic policy improvement.
//!
//! The crate computes performance lower bounds for on/off-policy policy
//! updates exactly (dense linear solves on finite MDPs), certifies them
//! numerically on randomized inputs, and applies them two ways: an exact
//! bound-guided policy improver, and a sampled trust-region trainer with
//! experience replay whose updates can be audited against the exact bounds.

pub mod bounds;
pub mod cert;
pub mod divergence;
pub mod envs;
pub mod error;
pub mod improver;
pub mod mdp;
pub mod rng;
pub mod trpo;

pub use bounds::{BoundReport, BoundVerdicts};
pub use error::{Error, Result};
pub use mdp::{Mdp, PolicyTable, ValueBundle};
