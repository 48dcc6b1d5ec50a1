//! Adaptive susceptible-infected-susceptible (ASIS) spreading over switching
//! contact networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] holds the initial contact topology and its spectral primitives.
//! * [`sim`] is an exact stochastic simulator of the joint node/edge Markov
//!   process plus Monte Carlo ensembles.
//! * [`meanfield`] assembles the linear bounding system, its spectral
//!   abscissa and the comparison-bound integrator.
//! * [`homo`] and [`hetero`] compute cost-optimal cutting/rewiring rates for
//!   homogeneous and heterogeneous populations.

pub mod error;
pub mod graph;
pub mod hetero;
pub mod homo;
pub mod linalg;
pub mod meanfield;
pub mod params;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use graph::{EdgeIndexMap, Graph};
pub use meanfield::{MeanFieldSystem, StabilityCertificate};
pub use params::ModelParams;
