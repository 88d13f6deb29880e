// SPDX-License-Identifier: Apache-2.0

//! JSON run configuration for the command-line pipelines.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::LqModel;

/// One JSON document: model fields at the top level, then `grid`, `run` and
/// per-subcommand blocks. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub x0: f64,
    pub b: f64,
    pub c: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub delta: f64,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub run: RunOptions,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub sweep: SweepOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Omitted: the default truncation for the model and `mu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { horizon: None, n: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ControlChoice {
    Zero,
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub n_paths: usize,
    pub base_seed: u64,
    pub outputs: PathBuf,
    pub control: ControlChoice,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            n_paths: 1000,
            base_seed: 0,
            outputs: PathBuf::from("out"),
            control: ControlChoice::Optimal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Cell counts for the refinement study, on the resolved horizon.
    pub refinement: Vec<usize>,
    /// Sample paths for the pathwise residual columns.
    pub residual_paths: usize,
    /// Required order is `alpha - order_slack`.
    pub order_slack: f64,
    pub n_perturbations: usize,
    pub epsilons: Vec<f64>,
    /// Paths per perturbation.
    pub dominance_paths: usize,
    /// Perturbations whose slope must be within two standard errors.
    pub min_slope_passes: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            refinement: vec![256, 512, 1024],
            residual_paths: 4,
            order_slack: 0.2,
            n_perturbations: 20,
            epsilons: vec![-0.1, -0.05, 0.05, 0.1],
            dominance_paths: 500,
            min_slope_passes: 18,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub parameter: String,
    pub values: Vec<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            parameter: "alpha".into(),
            values: vec![0.6, 0.75, 0.9, 1.0],
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn model(&self) -> LqModel {
        LqModel {
            x0: self.x0,
            b: self.b,
            c: self.c,
            sigma: self.sigma,
            gamma: self.gamma,
            alpha: self.alpha,
            delta: self.delta,
            lambda: self.lambda,
        }
    }

    /// Set one model field by name (used by `sweep`).
    pub fn set_parameter(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "x0" => &mut self.x0,
            "b" => &mut self.b,
            "c" => &mut self.c,
            "sigma" => &mut self.sigma,
            "gamma" => &mut self.gamma,
            "alpha" => &mut self.alpha,
            "delta" => &mut self.delta,
            "lambda" => &mut self.lambda,
            other => return Err(Error::Config(format!("sweep: unknown parameter `{other}`"))),
        };
        *slot = value;
        Ok(())
    }

    /// Grid from the config. Without an explicit horizon the default
    /// truncation is used, which needs an admissible `mu`; for models
    /// outside the admissible range `mu` falls back to `lambda / 2`.
    pub fn resolve_grid(&self) -> Result<TimeGrid> {
        let model = self.model();
        model.validate()?;
        match self.grid.horizon {
            Some(t) => TimeGrid::new(t, self.grid.n),
            None => {
                let mu = match model.admissibility(self.mu) {
                    Ok(a) => a.mu,
                    Err(Error::NotAdmissible { .. }) => 0.5 * model.lambda,
                    Err(e) => return Err(e),
                };
                TimeGrid::default_for(&model, mu, self.grid.n)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"x0":1,"b":0.1,"c":1,"sigma":0.5,"gamma":1,"alpha":0.75,"delta":0.5,"lambda":3}"#;

    #[test]
    fn defaults_fill_blocks() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.grid.n, 512);
        assert_eq!(c.run.control, ControlChoice::Optimal);
        assert_eq!(c.verify.refinement, vec![256, 512, 1024]);
        let partial = MINIMAL.replace("}", r#","run":{"n_paths":7}}"#);
        let c = RunConfig::from_json(&partial).unwrap();
        assert_eq!((c.run.n_paths, c.run.base_seed), (7, 0));
        assert_eq!(c.model().lambda, 3.0);
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.mu = Some(0.1 + 0.2);
        c.grid.horizon = Some(std::f64::consts::PI);
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_reported_with_position() {
        let text = "{\"x0\":1,\"b\":0,\"c\":1,\"sigma\":0,\"gamma\":1,\n\"alpha\":1,\"delta\":0,\"lambda\":3,\"lamda\":2}";
        let msg = RunConfig::from_json(text).unwrap_err().to_string();
        assert!(msg.contains("lamda"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
        let nested = MINIMAL.replace("}", r#","grid":{"n":64,"steps":3}}"#);
        assert!(RunConfig::from_json(&nested).unwrap_err().to_string().contains("steps"));
    }

    #[test]
    fn sweep_parameter_names() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.set_parameter("alpha", 0.9).unwrap();
        assert_eq!(c.model().alpha, 0.9);
        assert!(c.set_parameter("kappa", 1.0).is_err());
    }

    #[test]
    fn default_grid_puts_delay_on_a_node() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        let g = c.resolve_grid().unwrap();
        assert!(g.delay_steps(0.5).is_ok());
    }
}
