// SPDX-License-Identifier: Apache-2.0

//! The optimal feedback law, the change of control variable `T`, optimal
//! paths, and Monte Carlo cost estimation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fredholm::{self, FredholmSystem, KernelTables, ResolventAction};
use crate::grid::TimeGrid;
use crate::kernels::KernelEvaluator;
use crate::model::{AdmissibilityConstants, LqModel};
use crate::simulate::{convolve_midpoints, sample_brownian, BrownianPath, FracScheme, PathKind, SamplePath};

/// Everything needed to generate the optimal control on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackLaw {
    pub model: LqModel,
    pub grid: TimeGrid,
    pub constants: AdmissibilityConstants,
    pub k_const: f64,
    /// Coefficient on the delayed state, `-b/c`.
    pub gain: f64,
    /// Deterministic part of the transformed control at `t_0..=t_n`.
    pub phi_hat: Vec<f64>,
    /// Convolution kernel at `t_0..=t_n`.
    pub psi_hat: Vec<f64>,
    /// Convolution kernel at `t_i + h/2`, `i = 0..n`.
    pub psi_mid: Vec<f64>,
    /// `int r(t_i, s) ds`, `i = 0..n`.
    pub resolvent_row_integrals: Vec<f64>,
    /// `int r(t_i, s) g(s) ds`, `i = 0..n`.
    pub resolvent_g_integrals: Vec<f64>,
    /// `g_lambda` at the midpoints, reused by the residual checks.
    pub g_mid: Vec<f64>,
    pub kernel_tables: KernelTables,
    pub norm_estimate: f64,
    pub phi_residual: f64,
    pub psi_residual: f64,
    pub phi_route_gap: f64,
    pub psi_route_gap: f64,
    pub delay_steps: usize,
}

/// Build the feedback law on `grid`. `mu = None` picks the default weight.
pub fn synthesize(model: &LqModel, grid: &TimeGrid, mu: Option<f64>) -> Result<FeedbackLaw> {
    Ok(synthesize_full(model, grid, mu)?.0)
}

/// As [`synthesize`], also returning the factored system for callers that
/// need the kernel tables.
pub fn synthesize_full(
    model: &LqModel,
    grid: &TimeGrid,
    mu: Option<f64>,
) -> Result<(FeedbackLaw, FredholmSystem)> {
    let constants = model.admissibility(mu)?;
    let delay_steps = grid.delay_steps(model.delta)?;
    let ev = KernelEvaluator::new(*model);
    let kernel = fredholm::discretize_with(&ev, grid, constants.mu)?;
    let g = fredholm::g_samples(&ev, &kernel)?;
    let norm_estimate = kernel.norm_estimate;
    let system = FredholmSystem::new(kernel)?;

    let phi = fredholm::phi_hat(model, &system, &system)?;
    let psi = fredholm::psi_hat(model, &system, &system, &g)?;
    let n = grid.n();
    let k = system.kernel();

    let kx0 = model.k_constant() * model.x0;
    let s = model.sigma / model.c;
    let mut phi_hat = phi.values.clone();
    phi_hat.push(k.interpolate_node(n, &phi.values, -kx0));
    let mut psi_hat = psi.values.clone();
    psi_hat.push(k.interpolate_node(n, &psi.values, -s * g.nodes[n]));
    let a_mid: Vec<f64> = g.midpoints.iter().map(|v| -s * v).collect();
    let psi_mid = k.interpolate_midpoints(&psi.values, &a_mid);

    let resolvent_row_integrals = system.apply_resolvent(&vec![1.0; n]);
    let resolvent_g_integrals = system.apply_resolvent(&g.nodes[..n]);

    let law = FeedbackLaw {
        model: *model,
        grid: *grid,
        constants,
        k_const: model.k_constant(),
        gain: model.gain(),
        phi_hat,
        psi_hat,
        psi_mid,
        resolvent_row_integrals,
        resolvent_g_integrals,
        g_mid: g.midpoints,
        kernel_tables: k.tables.clone(),
        norm_estimate,
        phi_residual: phi.residual,
        psi_residual: psi.residual,
        phi_route_gap: phi.route_gap,
        psi_route_gap: psi.route_gap,
        delay_steps,
    };
    Ok((law, system))
}

fn delayed(x: &[f64], i: usize, d: usize, x0: f64) -> f64 {
    if i >= d {
        x[i - d]
    } else {
        x0
    }
}

/// `v(t) = (b/c) X(t - delta) + u(t)`.
pub fn transform_t(model: &LqModel, u: &SamplePath, x: &SamplePath) -> Result<SamplePath> {
    u.grid.ensure_same(&x.grid, "control vs state")?;
    let d = u.grid.delay_steps(model.delta)?;
    let r = model.b / model.c;
    let v = (0..u.values.len())
        .map(|i| r * delayed(&x.values, i, d, model.x0) + u.values[i])
        .collect();
    SamplePath::new(u.grid, v, PathKind::Auxiliary)
}

/// Returns `(u, X)` with `X` the delay-free state driven by `v` and
/// `u(t) = -(b/c) X(t - delta) + v(t)`.
pub fn inverse_t(model: &LqModel, v: &SamplePath, w: &BrownianPath) -> Result<(SamplePath, SamplePath)> {
    let scheme = FracScheme::new(model, &w.grid)?;
    inverse_t_with(&scheme, v, w)
}

pub fn inverse_t_with(scheme: &FracScheme, v: &SamplePath, w: &BrownianPath) -> Result<(SamplePath, SamplePath)> {
    let model = &scheme.model;
    let mut x = scheme.volterra_state(v, w)?;
    x.kind = PathKind::State;
    let gain = model.gain();
    let d = scheme.delay_steps;
    let u = (0..v.values.len())
        .map(|i| gain * delayed(&x.values, i, d, model.x0) + v.values[i])
        .collect();
    Ok((SamplePath::new(v.grid, u, PathKind::Control)?, x))
}

#[derive(Debug, Clone)]
pub struct OptimalPaths {
    pub control: SamplePath,
    pub state: SamplePath,
    /// The transformed control `v^ = phi^ + int psi^(t - theta) dW(theta)`.
    pub transformed: SamplePath,
}

pub fn optimal_paths(law: &FeedbackLaw, w: &BrownianPath) -> Result<OptimalPaths> {
    let scheme = FracScheme::new(&law.model, &law.grid)?;
    optimal_paths_with(law, &scheme, w)
}

pub fn optimal_paths_with(law: &FeedbackLaw, scheme: &FracScheme, w: &BrownianPath) -> Result<OptimalPaths> {
    law.grid.ensure_same(&w.grid, "feedback law vs Brownian path")?;
    let conv = convolve_midpoints(&law.psi_mid, w)?;
    let v: Vec<f64> = law.phi_hat.iter().zip(&conv.values).map(|(p, c)| p + c).collect();
    let transformed = SamplePath::new(law.grid, v, PathKind::Auxiliary)?;
    let (control, state) = inverse_t_with(scheme, &transformed, w)?;
    Ok(OptimalPaths {
        control,
        state,
        transformed,
    })
}

/// Trapezoid rule for `(1/2) int_0^T e^{-lambda t} (X^2 + u^2/gamma) dt`.
pub fn path_cost(model: &LqModel, grid: &TimeGrid, u: &[f64], x: &[f64]) -> f64 {
    let h = grid.h();
    let n = grid.n();
    let f = |i: usize| 0.5 * (-model.lambda * grid.t(i)).exp() * (x[i] * x[i] + u[i] * u[i] / model.gamma);
    let interior: f64 = (1..n).map(f).sum();
    h * (0.5 * (f(0) + f(n)) + interior)
}

/// Undiscounted running cost averaged over the last tenth of the horizon.
fn terminal_running_cost(model: &LqModel, grid: &TimeGrid, u: &[f64], x: &[f64]) -> f64 {
    let n = grid.n();
    let start = n - (n / 10).max(1);
    let tail = &(start..=n).collect::<Vec<_>>();
    tail.iter()
        .map(|&i| 0.5 * (x[i] * x[i] + u[i] * u[i] / model.gamma))
        .sum::<f64>()
        / tail.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub base_seed: u64,
    /// `e^{-lambda T}` times the terminal running cost, over `lambda`.
    pub horizon_truncation_bound: f64,
}

/// Where the control for a cost evaluation comes from.
#[derive(Debug, Clone)]
pub enum ControlSource<'a> {
    Zero,
    /// A deterministic open-loop control, sampled at the nodes.
    Fixed(&'a [f64]),
    Optimal(&'a FeedbackLaw),
    /// `u^ + eps * perturbation`, with the state re-simulated.
    Perturbed {
        law: &'a FeedbackLaw,
        perturbation: &'a [f64],
        eps: f64,
    },
}

/// Control and state of one path of `source`.
pub fn source_path(
    scheme: &FracScheme,
    source: &ControlSource<'_>,
    w: &BrownianPath,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = scheme.grid;
    let open_loop = |u: Vec<f64>| -> Result<(Vec<f64>, Vec<f64>)> {
        let up = SamplePath::new(grid, u, PathKind::Control)?;
        let x = scheme.simulate(&up, w)?;
        Ok((up.values, x.values))
    };
    match source {
        ControlSource::Zero => open_loop(vec![0.0; grid.n() + 1]),
        ControlSource::Fixed(u) => open_loop(u.to_vec()),
        ControlSource::Optimal(law) => {
            let p = optimal_paths_with(law, scheme, w)?;
            Ok((p.control.values, p.state.values))
        }
        ControlSource::Perturbed {
            law,
            perturbation,
            eps,
        } => {
            let p = optimal_paths_with(law, scheme, w)?;
            let u = p
                .control
                .values
                .iter()
                .zip(perturbation.iter())
                .map(|(a, b)| a + eps * b)
                .collect();
            open_loop(u)
        }
    }
}

/// Monte Carlo estimate of the discounted cost with path seeds `base_seed + i`.
pub fn cost_estimate(
    model: &LqModel,
    source: &ControlSource<'_>,
    grid: &TimeGrid,
    n_paths: usize,
    base_seed: u64,
) -> Result<CostEstimate> {
    if n_paths < 2 {
        return Err(Error::Precondition(format!(
            "cost estimation needs at least 2 paths, got {n_paths}"
        )));
    }
    if let ControlSource::Fixed(u) | ControlSource::Perturbed { perturbation: u, .. } = source {
        if u.len() != grid.n() + 1 {
            return Err(Error::GridMismatch(format!(
                "control has {} samples, grid has {} nodes",
                u.len(),
                grid.n() + 1
            )));
        }
    }
    let scheme = FracScheme::new(model, grid)?;
    let per_path: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let w = sample_brownian(grid, base_seed.wrapping_add(i as u64));
            let (u, x) = source_path(&scheme, source, &w)?;
            Ok((
                path_cost(model, grid, &u, &x),
                terminal_running_cost(model, grid, &u, &x),
            ))
        })
        .collect::<Result<_>>()?;
    let costs: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let (mean, std_error) = mean_and_se(&costs);
    let tail = compensated_sum(per_path.iter().map(|p| p.1)) / n_paths as f64;
    Ok(CostEstimate {
        mean,
        std_error,
        n_paths,
        base_seed,
        horizon_truncation_bound: (-model.lambda * grid.horizon()).exp() * tail / model.lambda,
    })
}

/// Neumaier summation; order-independent up to rounding of the final result.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::simulate_frac_sdde;

    fn model() -> LqModel {
        crate::model::test_model()
    }

    fn small_law(m: &LqModel, n: usize) -> FeedbackLaw {
        let mu = m.admissibility(None).unwrap().mu;
        synthesize(m, &TimeGrid::default_for(m, mu, n).unwrap(), None).unwrap()
    }

    #[test]
    fn zero_problem_has_zero_law_and_cost() {
        let m = LqModel { x0: 0.0, sigma: 0.0, ..model() };
        let law = small_law(&m, 64);
        assert!(law.phi_hat.iter().chain(&law.psi_hat).chain(&law.psi_mid).all(|v| *v == 0.0));
        let w = sample_brownian(&law.grid, 1);
        let p = optimal_paths(&law, &w).unwrap();
        assert!(p.control.values.iter().all(|v| *v == 0.0));
        let c = cost_estimate(&m, &ControlSource::Optimal(&law), &law.grid, 2, 0).unwrap();
        assert_eq!(c.mean, 0.0);
        let c0 = cost_estimate(&m, &ControlSource::Zero, &law.grid, 2, 0).unwrap();
        assert_eq!(c0.mean, 0.0);
    }

    #[test]
    fn law_invariants() {
        let m = model();
        let law = small_law(&m, 96);
        assert_eq!(law.gain * m.c, -m.b);
        assert!(law.phi_residual < 1e-9 && law.psi_residual < 1e-9);
        assert_eq!(law.phi_hat.len(), 97);
        assert_eq!(law.psi_mid.len(), 96);
        // Closed forms of the resolvent integrals reproduce the solutions.
        for i in 0..96 {
            let phi = law.k_const * (law.resolvent_row_integrals[i] - 1.0) * m.x0;
            assert!((phi - law.phi_hat[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn b_zero_makes_control_the_transformed_process() {
        let m = LqModel { b: 0.0, ..model() };
        let law = small_law(&m, 64);
        assert_eq!(law.gain, 0.0);
        let p = optimal_paths(&law, &sample_brownian(&law.grid, 4)).unwrap();
        assert_eq!(p.control.values, p.transformed.values);
    }

    #[test]
    fn feedback_identity_holds_exactly() {
        let m = model();
        let law = small_law(&m, 64);
        let p = optimal_paths(&law, &sample_brownian(&law.grid, 8)).unwrap();
        let d = law.delay_steps;
        for i in 0..=law.grid.n() {
            let xd = if i >= d { p.state.values[i - d] } else { m.x0 };
            assert_eq!(p.control.values[i], law.gain * xd + p.transformed.values[i]);
        }
    }

    #[test]
    fn transform_round_trip() {
        let m = model();
        let g = TimeGrid::new(4.0, 64).unwrap();
        let w = sample_brownian(&g, 21);
        let u = SamplePath::new(g, g.nodes().iter().map(|t| (1.0 + t).ln()).collect(), PathKind::Control).unwrap();
        let x = simulate_frac_sdde(&m, &u, &w).unwrap();
        let v = transform_t(&m, &u, &x).unwrap();
        let (u2, x2) = inverse_t(&m, &v, &w).unwrap();
        for i in 0..=64 {
            assert!((u2.values[i] - u.values[i]).abs() < 1e-10);
            assert!((x2.values[i] - x.values[i]).abs() < 1e-10);
        }
        let m0 = LqModel { b: 0.0, ..m };
        let x0 = simulate_frac_sdde(&m0, &u, &w).unwrap();
        assert_eq!(transform_t(&m0, &u, &x0).unwrap().values, u.values);
    }

    #[test]
    fn inverse_of_zero_without_noise_is_constant() {
        let m = LqModel { sigma: 0.0, ..model() };
        let g = TimeGrid::new(2.0, 32).unwrap();
        let (u, x) = inverse_t(&m, &SamplePath::zeros(g, PathKind::Auxiliary), &sample_brownian(&g, 0)).unwrap();
        assert!(x.values.iter().all(|v| *v == m.x0));
        assert!(u.values.iter().all(|v| *v == -m.b / m.c * m.x0));
    }

    #[test]
    fn convexity_along_segment() {
        let m = model();
        let law = small_law(&m, 64);
        let g = law.grid;
        let u1: Vec<f64> = g.nodes().iter().map(|t| (-t).exp()).collect();
        let j = |theta: f64| {
            let u: Vec<f64> = u1.iter().map(|v| theta * v).collect();
            cost_estimate(&m, &ControlSource::Fixed(&u), &g, 8, 100).unwrap().mean
        };
        let (a, b, c) = (j(0.0), j(0.5), j(1.0));
        assert!(a + c - 2.0 * b > 0.0);
    }

    #[test]
    fn cost_rejects_single_path() {
        let m = model();
        let g = TimeGrid::new(2.0, 16).unwrap();
        assert!(matches!(
            cost_estimate(&m, &ControlSource::Zero, &g, 1, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
