// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LqModel;

/// Relative slack allowed when checking that the delay is a whole number of steps.
const ON_GRID_TOL: f64 = 1e-9;

/// Uniform grid on `[0, horizon]` with `n` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n: usize,
    h: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("n must be at least 2, got {n}")));
        }
        Ok(Self {
            horizon,
            n,
            h: horizon / n as f64,
        })
    }

    /// Default truncation `max(10/lambda, 8/mu, 4 delta + 1)`, stretched so the
    /// delay lands on a node for the requested cell count.
    pub fn default_for(model: &LqModel, mu: f64, n: usize) -> Result<Self> {
        let base = (10.0 / model.lambda)
            .max(8.0 / mu)
            .max(4.0 * model.delta + 1.0);
        if model.delta == 0.0 {
            return Self::new(base, n);
        }
        // Largest whole number of delay steps not exceeding the base step.
        let k = ((model.delta * n as f64) / base).floor().max(1.0);
        Self::new(model.delta * n as f64 / k, n)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.t(i)).collect()
    }

    /// Number of whole steps in `delta`; errors if the delay is off-grid.
    pub fn delay_steps(&self, delta: f64) -> Result<usize> {
        if delta == 0.0 {
            return Ok(0);
        }
        let r = delta / self.h;
        let d = r.round();
        if (r - d).abs() > ON_GRID_TOL * r.max(1.0) || d < 1.0 {
            let steps = r.ceil().max(1.0);
            return Err(Error::DelayOffGrid {
                delta,
                h: self.h,
                suggested_h: delta / steps,
            });
        }
        Ok(d as usize)
    }

    /// Same horizon with `n / factor` cells.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n.is_multiple_of(factor) {
            return Err(Error::InvalidGrid(format!(
                "cannot coarsen {} cells by a factor of {factor}",
                self.n
            )));
        }
        Self::new(self.horizon, self.n / factor)
    }

    pub fn ensure_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self.n != other.n || (self.horizon - other.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::GridMismatch(format!(
                "{what}: ({}, {}) vs ({}, {})",
                self.horizon, self.n, other.horizon, other.n
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn delay_on_and_off_grid() {
        let g = TimeGrid::new(8.0, 64).unwrap();
        assert_eq!(g.delay_steps(0.5).unwrap(), 4);
        assert_eq!(g.delay_steps(0.0).unwrap(), 0);
        match g.delay_steps(0.3).unwrap_err() {
            Error::DelayOffGrid { suggested_h, .. } => {
                let k = 0.3 / suggested_h;
                assert!((k - k.round()).abs() < 1e-12);
                assert!(suggested_h <= g.h());
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn default_horizon_puts_delay_on_grid() {
        let m = crate::model::test_model();
        for n in [64, 100, 257, 1024] {
            let g = TimeGrid::default_for(&m, 1.0, n).unwrap();
            assert!(g.horizon() >= 10.0 / m.lambda - 1e-12);
            assert!(g.horizon() >= 8.0 - 1e-12);
            assert!(g.delay_steps(m.delta).is_ok(), "n = {n}");
        }
    }

    #[test]
    fn coarsen_keeps_horizon() {
        let g = TimeGrid::new(4.0, 128).unwrap();
        let c = g.coarsen(4).unwrap();
        assert_eq!(c.n(), 32);
        assert_eq!(c.h(), 0.125);
        assert!(g.coarsen(3).is_err());
    }
}
