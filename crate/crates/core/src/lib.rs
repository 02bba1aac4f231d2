//! Heterogeneous multi-modal spatio-temporal graph learning.
//!
//! The crate fuses three data modalities keyed by census tract:
//!
//! * 1D city-wide weather series ([`ingest::WeatherSeries`]),
//! * 2D time-constant tract features ([`ingest::FeatureTable`]),
//! * 3D tract-by-time event counts ([`ingest::ObservationCube`]).
//!
//! Tract features are turned into a homophily-weighted adjacency
//! ([`graph`]), which feeds two forecasters: a deterministic STGCN
//! ([`stgcn`]) trained with a Huber loss, and a probabilistic STZINB
//! ([`stzinb`]) whose heads parameterize a zero-inflated negative binomial.
//! [`baselines`], [`metrics`] and [`experiment`] complete the workflow.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod stgcn;
pub mod stzinb;
pub mod synth;
mod util;

pub use error::{Error, ErrorKind, Result};
