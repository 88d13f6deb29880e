// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model field violates its admissible range; the message names the field.
    #[error("{0}")]
    InvalidParameter(String),

    #[error("lambda = {lambda} must exceed 2*rho_tilde_alpha = {bound}; raise lambda or lower the coupling")]
    NotAdmissible { lambda: f64, bound: f64 },

    #[error("mu = {mu} must lie in ({lower}, {upper}]")]
    InvalidMu { mu: f64, lower: f64, upper: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("delay {delta} is not a multiple of the step {h}; use a step of {suggested_h}")]
    DelayOffGrid { delta: f64, h: f64, suggested_h: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("quadrature did not reach tolerance {tolerance}: estimate {estimate}, error {error}")]
    Quadrature {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("outside contraction regime (kernel norm estimate {norm} >= 1); raise mu or lambda")]
    Contraction { norm: f64 },

    #[error("Neumann series stopped after {iterations} iterations with residual {residual}")]
    NeumannNotConverged { iterations: usize, residual: f64 },

    #[error("singular linear system (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("{what}: residual {residual:e} exceeds {tolerance:e}; refine the grid")]
    Residual {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("{what}: solution routes disagree by {gap:e} (tolerance {tolerance:e}); discretization failure")]
    RouteDisagreement {
        what: &'static str,
        gap: f64,
        tolerance: f64,
    },

    #[error("path diverged at node {node} (t = {t}, value {value})")]
    Divergence { node: usize, t: f64, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
