//! STZINB forecaster: diffusion-graph and temporal branches whose fused
//! heads parameterize a zero-inflated negative binomial per node.

pub mod dist;
pub mod model;

pub use dist::{fit_marginal, Zinb};
pub use model::{MODEL_NAME, PredictiveDistribution, Stzinb, StzinbConfig};
