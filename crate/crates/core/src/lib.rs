// SPDX-License-Identifier: Apache-2.0

//! Optimal control of a scalar linear-quadratic problem driven by a Caputo
//! fractional stochastic delay equation, synthesized through the Fredholm
//! resolvent of a two-sided kernel and checked by simulation.

pub mod cli;
pub mod config;
pub mod error;
pub mod fredholm;
pub mod grid;
pub mod kernels;
pub mod model;
pub mod quadrature;
pub mod simulate;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use model::{AdmissibilityConstants, LqModel};
