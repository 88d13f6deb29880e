// SPDX-License-Identifier: Apache-2.0

//! Brownian paths and forward simulation of the controlled state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::gamma;
use crate::model::LqModel;

/// Paths are abandoned once a value leaves this range.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: TimeGrid,
    /// `n` increments `W(t_{i+1}) - W(t_i)`.
    pub increments: Vec<f64>,
    pub seed: u64,
}

pub fn sample_brownian(grid: &TimeGrid, seed: u64) -> BrownianPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = grid.h().sqrt();
    let increments = (0..grid.n())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sd
        })
        .collect();
    BrownianPath {
        grid: *grid,
        increments,
        seed,
    }
}

impl BrownianPath {
    /// Sum increments in blocks of `factor`: the same path on a coarser grid.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        let grid = self.grid.coarsen(factor)?;
        let increments = self
            .increments
            .chunks(factor)
            .map(|c| c.iter().sum())
            .collect();
        Ok(BrownianPath {
            grid,
            increments,
            seed: self.seed,
        })
    }

    /// `W(t_i)`, `i = 0..=n`.
    pub fn values(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        w.push(acc);
        for dw in &self.increments {
            acc += dw;
            w.push(acc);
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    State,
    Control,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: TimeGrid,
    /// Values at `t_0..=t_n`.
    pub values: Vec<f64>,
    pub kind: PathKind,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>, kind: PathKind) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return Err(Error::GridMismatch(format!(
                "path has {} values, grid has {} nodes",
                values.len(),
                grid.n() + 1
            )));
        }
        check_finite(&grid, &values)?;
        Ok(Self { grid, values, kind })
    }

    pub fn zeros(grid: TimeGrid, kind: PathKind) -> Self {
        Self {
            values: vec![0.0; grid.n() + 1],
            grid,
            kind,
        }
    }

    pub fn constant(grid: TimeGrid, value: f64, kind: PathKind) -> Self {
        Self {
            values: vec![value; grid.n() + 1],
            grid,
            kind,
        }
    }
}

fn check_finite(grid: &TimeGrid, values: &[f64]) -> Result<()> {
    match values
        .iter()
        .position(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
    {
        Some(node) => Err(Error::Divergence {
            node,
            t: grid.t(node),
            value: values[node],
        }),
        None => Ok(()),
    }
}

type Coefficient<'a> = Box<dyn Fn(f64, f64, f64, f64, f64) -> f64 + Send + Sync + 'a>;
type Profile<'a> = Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>;

/// Coefficients of a delay Volterra equation
/// `X(t) = phi(t) + int_0^t b(t,s,X(s),X(s-delta),u(s)) ds + int_0^t sigma(t,s,...) dW(s)`.
pub struct SdvieCoefficients<'a> {
    /// `(t, s, x1, x2, u)`.
    pub drift: Coefficient<'a>,
    pub diffusion: Coefficient<'a>,
    pub free_term: Profile<'a>,
    /// Initial segment on `[-delta, 0]`.
    pub history: Profile<'a>,
    pub delay: f64,
}

impl SdvieCoefficients<'static> {
    /// The LQ state equation written with a pointwise kernel. Only the
    /// left-point scheme uses this, so `(t - s)^{alpha-1}` is never taken at 0.
    pub fn from_model(model: &LqModel) -> Self {
        let m = *model;
        let ga = gamma(m.alpha);
        Self {
            drift: Box::new(move |t, s, _x1, x2, u| {
                (t - s).powf(m.alpha - 1.0) / ga * (m.b * x2 + m.c * u)
            }),
            diffusion: Box::new(move |t, s, _, _, _| m.sigma * (t - s).powf(m.alpha - 1.0) / ga),
            free_term: Box::new(move |_| m.x0),
            history: Box::new(move |_| m.x0),
            delay: m.delta,
        }
    }
}

fn check_inputs(control: &SamplePath, w: &BrownianPath) -> Result<()> {
    control.grid.ensure_same(&w.grid, "control vs Brownian path")?;
    Ok(())
}

/// Left-point Volterra–Euler scheme.
pub fn simulate_sdvie(
    coeffs: &SdvieCoefficients<'_>,
    control: &SamplePath,
    w: &BrownianPath,
) -> Result<SamplePath> {
    check_inputs(control, w)?;
    let grid = w.grid;
    let d = grid.delay_steps(coeffs.delay)?;
    let h = grid.h();
    let n = grid.n();
    let u = &control.values;
    let mut x = vec![0.0; n + 1];
    let delayed = |x: &[f64], j: usize| {
        if j >= d {
            x[j - d]
        } else {
            (coeffs.history)(grid.t(j) - coeffs.delay)
        }
    };
    for i in 0..=n {
        let ti = grid.t(i);
        let mut acc = (coeffs.free_term)(ti);
        for j in 0..i {
            let tj = grid.t(j);
            let x2 = delayed(&x, j);
            acc += (coeffs.drift)(ti, tj, x[j], x2, u[j]) * h
                + (coeffs.diffusion)(ti, tj, x[j], x2, u[j]) * w.increments[j];
        }
        if !acc.is_finite() || acc.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                node: i,
                t: ti,
                value: acc,
            });
        }
        x[i] = acc;
    }
    Ok(SamplePath {
        grid,
        values: x,
        kind: PathKind::State,
    })
}

/// Simulate the delay-free two-component lift `(X(t), X(t - delta))` with the
/// same left-point scheme. Returns `(X1, X2)`.
pub fn lift_and_simulate(
    coeffs: &SdvieCoefficients<'_>,
    control: &SamplePath,
    w: &BrownianPath,
) -> Result<(SamplePath, SamplePath)> {
    check_inputs(control, w)?;
    let grid = w.grid;
    let d = grid.delay_steps(coeffs.delay)?;
    let h = grid.h();
    let n = grid.n();
    let u = &control.values;
    let mut x1 = vec![0.0; n + 1];
    let mut x2 = vec![0.0; n + 1];
    for i in 0..=n {
        let ti = grid.t(i);
        let mut acc1 = (coeffs.free_term)(ti);
        for j in 0..i {
            let tj = grid.t(j);
            acc1 += (coeffs.drift)(ti, tj, x1[j], x2[j], u[j]) * h
                + (coeffs.diffusion)(ti, tj, x1[j], x2[j], u[j]) * w.increments[j];
        }
        // Second component: free term phi(t - delta) and coefficients shifted to
        // t - delta, switched on only where t - s > delta.
        let acc2 = if i < d {
            (coeffs.history)(ti - coeffs.delay)
        } else {
            let ts = grid.t(i - d);
            let mut acc = (coeffs.free_term)(ts);
            for j in 0..i - d {
                let tj = grid.t(j);
                acc += (coeffs.drift)(ts, tj, x1[j], x2[j], u[j]) * h
                    + (coeffs.diffusion)(ts, tj, x1[j], x2[j], u[j]) * w.increments[j];
            }
            acc
        };
        for (v, node) in [(acc1, i), (acc2, i)] {
            if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    node,
                    t: ti,
                    value: v,
                });
            }
        }
        x1[i] = acc1;
        x2[i] = acc2;
    }
    Ok((
        SamplePath {
            grid,
            values: x1,
            kind: PathKind::State,
        },
        SamplePath {
            grid,
            values: x2,
            kind: PathKind::Auxiliary,
        },
    ))
}

/// Product-integration weights of the fractional kernel on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FracWeights {
    /// `drift[m] = int_{(m-1)h}^{mh} tau^{alpha-1} dtau / Gamma(alpha)`, `m = 1..=n` (index 0 unused).
    pub drift: Vec<f64>,
    /// `noise[m] = sqrt(int_{(m-1)h}^{mh} tau^{2alpha-2} dtau / h) / Gamma(alpha)`.
    pub noise: Vec<f64>,
}

/// `m^p - (m-1)^p` without cancellation for large `m`.
fn power_difference(m: usize, p: f64) -> f64 {
    if m == 1 {
        return 1.0;
    }
    let m = m as f64;
    -m.powf(p) * (p * (-1.0 / m).ln_1p()).exp_m1()
}

impl FracWeights {
    pub fn new(alpha: f64, grid: &TimeGrid) -> Self {
        let n = grid.n();
        let h = grid.h();
        let ga = gamma(alpha);
        let q = 2.0 * alpha - 1.0;
        let mut drift = vec![0.0; n + 1];
        let mut noise = vec![0.0; n + 1];
        for m in 1..=n {
            drift[m] = h.powf(alpha) * power_difference(m, alpha) / (alpha * ga);
            noise[m] = h.powf(alpha - 1.0) * (power_difference(m, q) / q).sqrt() / ga;
        }
        Self { drift, noise }
    }
}

/// Fractional delay scheme
/// `X_i = x0 + sum_{j<i} w_{i-j} (b X_{j-d} + c u_j) + sigma sum_{j<i} w^_{i-j} dW_j`
/// with `X = x0` before time zero.
#[derive(Debug, Clone)]
pub struct FracScheme {
    pub model: LqModel,
    pub grid: TimeGrid,
    pub delay_steps: usize,
    pub weights: FracWeights,
}

impl FracScheme {
    pub fn new(model: &LqModel, grid: &TimeGrid) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model: *model,
            grid: *grid,
            delay_steps: grid.delay_steps(model.delta)?,
            weights: FracWeights::new(model.alpha, grid),
        })
    }

    /// `sigma sum_{j<i} w^_{i-j} dW_j` for every node.
    pub fn noise_term(&self, w: &BrownianPath) -> Vec<f64> {
        let n = self.grid.n();
        let wn = &self.weights.noise;
        let mut out = vec![0.0; n + 1];
        for (i, o) in out.iter_mut().enumerate().skip(1) {
            let mut acc = 0.0;
            for (j, dw) in w.increments[..i].iter().enumerate() {
                acc += wn[i - j] * dw;
            }
            *o = self.model.sigma * acc;
        }
        out
    }

    /// Run the scheme with delayed-state gain `b` (the model's, or zero for
    /// the delay-free Volterra state).
    fn run(&self, b: f64, control: &[f64], w: &BrownianPath) -> Result<Vec<f64>> {
        let n = self.grid.n();
        let d = self.delay_steps;
        let m = &self.model;
        let wd = &self.weights.drift;
        let noise = self.noise_term(w);
        let mut x = vec![0.0; n + 1];
        let mut drive = vec![0.0; n];
        x[0] = m.x0;
        for i in 1..=n {
            let j = i - 1;
            let delayed = if j >= d { x[j - d] } else { m.x0 };
            drive[j] = b * delayed + m.c * control[j];
            let mut acc = 0.0;
            for (k, dk) in drive[..i].iter().enumerate() {
                acc += wd[i - k] * dk;
            }
            let v = m.x0 + acc + noise[i];
            if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    node: i,
                    t: self.grid.t(i),
                    value: v,
                });
            }
            x[i] = v;
        }
        Ok(x)
    }

    pub fn simulate(&self, control: &SamplePath, w: &BrownianPath) -> Result<SamplePath> {
        check_inputs(control, w)?;
        self.grid.ensure_same(&w.grid, "scheme vs Brownian path")?;
        Ok(SamplePath {
            grid: self.grid,
            values: self.run(self.model.b, &control.values, w)?,
            kind: PathKind::State,
        })
    }

    /// Delay-free state driven by `v`:
    /// `x0 + (c/Gamma) int (t-s)^{alpha-1} v ds + (sigma/Gamma) int (t-s)^{alpha-1} dW`.
    pub fn volterra_state(&self, v: &SamplePath, w: &BrownianPath) -> Result<SamplePath> {
        check_inputs(v, w)?;
        self.grid.ensure_same(&w.grid, "scheme vs Brownian path")?;
        Ok(SamplePath {
            grid: self.grid,
            values: self.run(0.0, &v.values, w)?,
            kind: PathKind::Auxiliary,
        })
    }
}

pub fn simulate_frac_sdde(model: &LqModel, control: &SamplePath, w: &BrownianPath) -> Result<SamplePath> {
    FracScheme::new(model, &w.grid)?.simulate(control, w)
}

/// Node samples to midpoint samples by linear interpolation.
pub fn midpoint_samples(psi: &[f64]) -> Vec<f64> {
    psi.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// `C_i = sum_{j<i} psi_mid[i-j-1] dW_j`, where `psi_mid[m]` is the kernel at offset `(m + 1/2) h`.
pub fn convolve_midpoints(psi_mid: &[f64], w: &BrownianPath) -> Result<SamplePath> {
    let n = w.grid.n();
    if psi_mid.len() < n {
        return Err(Error::GridMismatch(format!(
            "{} midpoint samples for {} cells",
            psi_mid.len(),
            n
        )));
    }
    let mut c = vec![0.0; n + 1];
    for (i, ci) in c.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        for (j, dw) in w.increments[..i].iter().enumerate() {
            acc += psi_mid[i - j - 1] * dw;
        }
        *ci = acc;
    }
    SamplePath::new(w.grid, c, PathKind::Auxiliary)
}

/// Stochastic convolution of node samples `psi(t_0..=t_n)` with the midpoint convention.
pub fn stochastic_convolution(psi: &[f64], w: &BrownianPath) -> Result<SamplePath> {
    if psi.len() != w.grid.n() + 1 {
        return Err(Error::GridMismatch(format!(
            "psi has {} samples, grid has {} nodes",
            psi.len(),
            w.grid.n() + 1
        )));
    }
    convolve_midpoints(&midpoint_samples(psi), w)
}
