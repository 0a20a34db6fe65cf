//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed configuration: {0}")]
    Parse(#[source] serde_json::Error),
    #[error("invalid value for `{field}`: {constraint}")]
    Invalid { field: String, constraint: String },
    #[error("bad override `{entry}`: {reason}")]
    Override { entry: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("`{name}` = {value} lies outside [0,1]")]
    Domain { name: &'static str, value: f64 },
    #[error("asymptotic speed system is singular (A1A2C1C2 - 1 = {det:e})")]
    Singular { det: f64 },
    #[error("density split undefined: {0}")]
    Degenerate(&'static str),
    #[error("moment state left the unit box at t = {t}: rho = {rho:?}, m = {m:?}")]
    StateLeftDomain { t: f64, rho: [f64; 2], m: [f64; 2] },
    #[error("equilibrium is a Dirac mass (lambda * a = 0)")]
    DiracEquilibrium,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DsmcError {
    #[error("initial condition carries no mass")]
    ZeroMass,
    #[error("initial box {index} has zero width")]
    EmptyBox { index: usize },
    #[error("particle count {0} is too small to represent every box")]
    TooFewParticles(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydroError {
    #[error("time step {dt:e} violates the CFL bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },
    #[error("state has {found} components, the model expects {expected}")]
    Components { expected: usize, found: usize },
    #[error("non-finite value in cell {cell} at t = {t}")]
    NotFinite { cell: usize, t: f64 },
    #[error("closure table build failed at rho_bar = {rho_bar}: {source}")]
    Closure {
        rho_bar: f64,
        #[source]
        source: ModelError,
    },
}

/// Umbrella error for experiment orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dsmc(#[from] DsmcError),
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Experiment(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
