//! Failure probabilities for random partitions of a network into committees.
//!
//! `N` nodes, some of them adversarial, are split into `K` committees. A
//! committee of size `N_mu` fails once it holds more than `floor(A N_mu)`
//! adversarial nodes. This crate computes the probability `delta` that any
//! committee fails, exactly and through bounds and a saddle-point asymptotic,
//! sizes committees for a target `delta`, and checks everything by
//! simulation.

pub mod error;
pub mod failure;
pub mod partitions;
pub mod probcore;
pub mod saddle;
pub mod simulate;
pub mod sizing;

pub use error::{Error, Result};
pub use failure::{DeltaResult, FailureQuery, Method};
pub use partitions::{AdversaryModel, AverageRates, CommitteeLayout, CountVector};
pub use probcore::{LogProb, Rate};
