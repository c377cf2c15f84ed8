//! Certified group fairness for graph neural network node classifiers.
//!
//! A trained classifier is wrapped in two nested randomized smoothers: Gaussian
//! noise on the attributes of vulnerable nodes and Bernoulli flips of their
//! incident node pairs. Monte Carlo estimates of how often the smoothed
//! classifier stays below a bias threshold yield certified budgets for
//! attribute (L2) and structure (L0) perturbations, and the fairest sampled
//! prediction is returned as the certified output.

pub mod attack;
pub mod certify;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod fairness;
pub mod gnn;
pub mod graph;
pub mod pipeline;
pub mod prediction;
pub mod rng;
pub mod smoothing;
pub mod synthetic;

pub use error::{Error, Result};
