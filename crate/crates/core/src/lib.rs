//! Simulation and cross-validation of dynamical wave-function collapse
//! models: discrete N-state stochastic collapse, the gambler's-ruin
//! analogy, spontaneous-localization hits, continuous spontaneous
//! localization, and a two-state hemisphere hidden-variable model.

pub mod csl;
pub mod discrete;
pub mod ensemble;
pub mod error;
pub mod fokker_planck;
pub mod gamblers;
pub mod hidden;
pub mod lattice;
pub mod noise;
pub mod rng;
pub mod sde;
pub mod sl;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStreamPolicy;
pub use stats::{EnsembleStats, Estimate, MomentAccumulator};
