//! Bayesian two-sample testing for samples of binary networks.
//!
//! Networks are modelled as a mixture of low-rank logistic factorizations whose
//! mixing weights depend on the group label. Group equality of the network
//! distributions reduces to equality of the mixing weights, tested globally and
//! edge by edge from the output of a Pólya-gamma Gibbs sampler.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod graph;
pub mod inference;
pub mod math;
pub mod model;
pub mod simulation;
pub mod testing;

pub use error::{Error, Result};
