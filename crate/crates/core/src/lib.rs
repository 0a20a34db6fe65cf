//! Hierarchical two-lane traffic model with driver-assist control.
//!
//! The crate spans four scales that share one parameter set:
//! binary interactions ([`micro`]), space-homogeneous moment equations
//! ([`moments`]) and their stationary speed law ([`equilibria`]), a particle
//! solver for the inhomogeneous kinetic system ([`dsmc`]) and finite-volume
//! solvers for its first-order hydrodynamic limits ([`hydro`]).

pub mod admissibility;
pub mod config;
pub mod dsmc;
pub mod equilibria;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod hydro;
pub mod micro;
pub mod moments;
pub mod output;

pub use config::{load_config, ExperimentSpec, ModelParams};
pub use error::{Error, Result};
