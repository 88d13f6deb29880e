// SPDX-License-Identifier: Apache-2.0

//! Numerical certificates for a synthesized law: residuals of the stochastic
//! Fredholm equation and the optimality conditions, the adjoint identity,
//! cost dominance under perturbation, and the classical Riccati limit.
//!
//! Every process generated by the law is linear in the Brownian increments,
//! `Z_l = mean[l] + sum_{k<l} kern[l-k] dW_k`, so conditional expectations
//! are obtained by dropping the increments after the conditioning time.
//! Each residual then has the form `D_i + sum_{k<i} rho(i-k) dW_k`, and its
//! `L^2(Omega)` size is computed exactly from `D` and `rho`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::{gamma, KernelEvaluator};
use crate::model::LqModel;
use crate::simulate::{sample_brownian, BrownianPath, FracScheme, FracWeights, PathKind, SamplePath};
use crate::synthesis::{mean_and_se, optimal_paths_with, path_cost, synthesize, FeedbackLaw};

/// Kernels and means of `v^`, `X^` and `u^` as linear functionals of the increments.
#[derive(Debug, Clone)]
pub struct GaussianRepresentation {
    pub delay_steps: usize,
    pub mean_v: Vec<f64>,
    pub kern_v: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub kern_x: Vec<f64>,
    pub mean_u: Vec<f64>,
    pub kern_u: Vec<f64>,
}

impl GaussianRepresentation {
    pub fn from_law(law: &FeedbackLaw) -> Self {
        let m = &law.model;
        let n = law.grid.n();
        let d = law.delay_steps;
        let w = FracWeights::new(m.alpha, &law.grid);

        let mean_v = law.phi_hat.clone();
        let mut kern_v = vec![0.0; n + 1];
        kern_v[1..].copy_from_slice(&law.psi_mid[..n]);

        let mut mean_x = vec![m.x0; n + 1];
        let mut kern_x = vec![0.0; n + 1];
        for l in 1..=n {
            let drift: f64 = (0..l).map(|j| w.drift[l - j] * mean_v[j]).sum();
            mean_x[l] = m.x0 + m.c * drift;
            let conv: f64 = (1..l).map(|p| w.drift[l - p] * kern_v[p]).sum();
            kern_x[l] = m.c * conv + m.sigma * w.noise[l];
        }

        let gain = law.gain;
        let mean_u = (0..=n)
            .map(|l| gain * if l >= d { mean_x[l - d] } else { m.x0 } + mean_v[l])
            .collect();
        let kern_u = (0..=n)
            .map(|r| gain * if r >= d { kern_x[r - d] } else { 0.0 } + kern_v[r])
            .collect();
        Self {
            delay_steps: d,
            mean_v,
            kern_v,
            mean_x,
            kern_x,
            mean_u,
            kern_u,
        }
    }

    /// `mean[l] + sum_{k<l} kern[l-k] dW_k` for every node.
    pub fn realize(mean: &[f64], kern: &[f64], w: &BrownianPath) -> Vec<f64> {
        (0..mean.len())
            .map(|l| mean[l] + (0..l).map(|k| kern[l - k] * w.increments[k]).sum::<f64>())
            .collect()
    }

    /// Variance at node `l`.
    pub fn variance(kern: &[f64], h: f64, l: usize) -> f64 {
        h * kern[1..=l].iter().map(|k| k * k).sum::<f64>()
    }
}

/// `D_i + sum_{k<i} coef[i-k] dW_k`, `i = 0..=i_max`.
#[derive(Debug, Clone)]
struct LinearResidual {
    det: Vec<f64>,
    coef: Vec<f64>,
}

impl LinearResidual {
    fn rms(&self, h: f64) -> Vec<f64> {
        let mut acc = 0.0;
        self.det
            .iter()
            .enumerate()
            .map(|(i, d)| {
                if i > 0 {
                    acc += self.coef[i] * self.coef[i];
                }
                (d * d + h * acc).sqrt()
            })
            .collect()
    }

    fn realize(&self, w: &BrownianPath) -> Vec<f64> {
        GaussianRepresentation::realize(&self.det, &self.coef, w)
    }

    fn report(&self, name: &str, grid: &TimeGrid, paths: &[BrownianPath], tail_bound: f64) -> ResidualReport {
        let rms = self.rms(grid.h());
        let sup_residual = rms.iter().fold(0.0_f64, |m, v| m.max(*v));
        let l2_residual = (rms.iter().map(|v| v * v).sum::<f64>() / rms.len() as f64).sqrt();
        let pathwise_sup = paths
            .iter()
            .map(|w| self.realize(w).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        ResidualReport {
            name: name.to_string(),
            sup_residual,
            l2_residual,
            pathwise_sup,
            tail_bound,
            grid: *grid,
            n_paths: paths.len(),
            per_refinement: vec![(grid.h(), sup_residual)],
            fitted_order: None,
        }
    }

    fn max_gap(&self, other: &LinearResidual, scale: f64) -> f64 {
        self.det
            .iter()
            .zip(&other.det)
            .chain(self.coef.iter().zip(&other.coef))
            .map(|(a, b)| (a - scale * b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    /// Sup over evaluation nodes of the exact `L^2(Omega)` residual.
    pub sup_residual: f64,
    /// Time-RMS of the same profile.
    pub l2_residual: f64,
    /// Largest absolute residual on the supplied sample paths.
    pub pathwise_sup: Option<f64>,
    /// Bound on what truncating the forward integrals can contribute.
    pub tail_bound: f64,
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// `(h, sup_residual)`, coarsest first.
    pub per_refinement: Vec<(f64, f64)>,
    pub fitted_order: Option<f64>,
}

/// Residuals are evaluated on `t <= T/2`; forward integrals use a window of
/// fixed length so the increment coefficients do not depend on the node.
struct Window {
    i_max: usize,
    len: usize,
}

fn window(law: &FeedbackLaw, extra_delays: usize) -> Result<Window> {
    let n = law.grid.n();
    let i_max = n / 2;
    let used = i_max + extra_delays * law.delay_steps;
    if used + 1 >= n {
        return Err(Error::InvalidGrid(format!(
            "horizon too short for residual windows: need more than {} cells",
            used + 1
        )));
    }
    Ok(Window {
        i_max,
        len: n - used,
    })
}

/// `q_m = int_{mh}^{(m+1)h} e^{-lambda tau} tau^{alpha-1} dtau / Gamma(alpha)`.
pub fn discounted_kernel_cells(model: &LqModel, h: f64, count: usize) -> Result<Vec<f64>> {
    let ev = KernelEvaluator::new(LqModel { delta: 0.0, ..*model });
    let ga = gamma(model.alpha);
    (0..count)
        .map(|m| Ok(ev.delay_moments(m as f64 * h, (m + 1) as f64 * h, [model.lambda])?[0] / ga))
        .collect()
}

/// `int_a^inf e^{-lambda tau} tau^{alpha-1} dtau / Gamma(alpha)` bounded above.
fn forward_tail(model: &LqModel, a: f64) -> f64 {
    (-model.lambda * a).exp() * a.powf(model.alpha - 1.0) / (model.lambda * gamma(model.alpha))
}

fn sup_rms(mean: &[f64], kern: &[f64], h: f64) -> f64 {
    (0..mean.len())
        .map(|l| (mean[l] * mean[l] + GaussianRepresentation::variance(kern, h, l)).sqrt())
        .fold(0.0, f64::max)
}

fn sfie_linear(law: &FeedbackLaw, rep: &GaussianRepresentation, win: &Window) -> LinearResidual {
    let m = &law.model;
    let t = &law.kernel_tables;
    let (i_max, len) = (win.i_max, win.len);
    let kx0 = law.k_const * m.x0;
    let s = m.sigma / m.c;
    let phi = &rep.mean_v;
    let kv = &rep.kern_v;
    let det = (0..=i_max)
        .map(|i| {
            let past: f64 = (0..i).map(|j| t.lower[i - j - 1] * phi[j]).sum();
            let future: f64 = (0..len).map(|q| t.upper[q] * phi[i + q]).sum();
            phi[i] + past + future + kx0
        })
        .collect();
    let mut coef = vec![0.0; i_max + 1];
    for (r, c) in coef.iter_mut().enumerate().skip(1) {
        let past: f64 = (1..r).map(|p| t.lower[r - p - 1] * kv[p]).sum();
        let future: f64 = (0..len).map(|q| t.upper[q] * kv[r + q]).sum();
        *c = kv[r] + past + future + s * law.g_mid[r - 1];
    }
    LinearResidual { det, coef }
}

/// Residual of the stochastic Fredholm equation satisfied by `v^`.
pub fn sfie_residual(law: &FeedbackLaw, paths: &[BrownianPath]) -> Result<ResidualReport> {
    let rep = GaussianRepresentation::from_law(law);
    let win = window(law, 0)?;
    let lin = sfie_linear(law, &rep, &win);
    let m = &law.model;
    let ev = KernelEvaluator::new(*m);
    let a = win.len as f64 * law.grid.h();
    let ga = ev.gamma_alpha();
    let g_tail = (-m.lambda * a).exp() / m.lambda
        * (m.coupling() * m.lambda.powf(-m.alpha) * a.powf(m.alpha - 1.0)
            + m.b.abs() * (a - m.delta).max(law.grid.h()).powf(m.alpha - 1.0))
        / ga;
    let tail = g_tail * sup_rms(&rep.mean_v, &rep.kern_v, law.grid.h());
    Ok(lin.report("sfie", &law.grid, paths, tail))
}

struct OptimalityPieces {
    oc1: LinearResidual,
    oc0: LinearResidual,
    ae: LinearResidual,
    tail_oc: f64,
    tail_ae: f64,
}

fn optimality_pieces(law: &FeedbackLaw) -> Result<OptimalityPieces> {
    let m = &law.model;
    let rep = GaussianRepresentation::from_law(law);
    let win = window(law, 1)?;
    let win_ae = window(law, 2)?;
    let (i_max, len) = (win.i_max, win.len);
    let d = law.delay_steps;
    let h = law.grid.h();
    let n = law.grid.n();
    let q = discounted_kernel_cells(m, h, len)?;
    let cg = m.c * m.gamma;
    let beta = m.b * (-m.lambda * m.delta).exp();
    let beta_y = beta / cg;
    let (mx, kx, mu_, ku) = (&rep.mean_x, &rep.kern_x, &rep.mean_u, &rep.kern_u);

    // Y_l = X_l - beta_y E_l[u_{l+d}], defined for l + d <= n.
    let mean_y: Vec<f64> = (0..=n - d).map(|l| mx[l] - beta_y * mu_[l + d]).collect();
    let kern_y: Vec<f64> = (0..=n - d).map(|r| kx[r] - beta_y * ku[r + d]).collect();

    let dot = |v: &[f64], start: usize, count: usize| -> f64 {
        (0..count).map(|k| q[k] * v[start + k]).sum()
    };

    let mut oc1 = LinearResidual {
        det: vec![0.0; i_max + 1],
        coef: vec![0.0; i_max + 1],
    };
    let mut oc0 = oc1.clone();
    let mut ae = oc1.clone();
    for i in 0..=i_max {
        oc1.det[i] = mu_[i] + cg * dot(mx, i, len) - beta * dot(mu_, i + d, len);
        oc0.det[i] = mu_[i] / m.gamma + m.c * dot(&mean_y, i, len);
        ae.det[i] = mean_y[i] - mx[i] - beta * dot(&mean_y, i + d, win_ae.len);
        if i > 0 {
            let r = i;
            oc1.coef[r] = ku[r] + cg * dot(kx, r, len) - beta * dot(ku, r + d, len);
            oc0.coef[r] = ku[r] / m.gamma + m.c * dot(&kern_y, r, len);
            ae.coef[r] = kern_y[r] - kx[r] - beta * dot(&kern_y, r + d, win_ae.len);
        }
    }
    let rms_x = sup_rms(mx, kx, h);
    let rms_u = sup_rms(mu_, ku, h);
    let rms_y = sup_rms(&mean_y, &kern_y, h);
    Ok(OptimalityPieces {
        oc1,
        oc0,
        ae,
        tail_oc: (cg * rms_x + beta.abs() * rms_u) * forward_tail(m, len as f64 * h),
        tail_ae: beta.abs() * rms_y * forward_tail(m, win_ae.len as f64 * h),
    })
}

/// Residual of the first-order optimality condition written in `X^` and `u^`.
pub fn oc1_residual(law: &FeedbackLaw, paths: &[BrownianPath]) -> Result<ResidualReport> {
    let p = optimality_pieces(law)?;
    Ok(p.oc1.report("oc1", &law.grid, paths, p.tail_oc))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjointReport {
    /// Optimality condition written with the closed-form adjoint.
    pub oc0: ResidualReport,
    /// Adjoint equation evaluated on the closed-form adjoint.
    pub adjoint_equation: ResidualReport,
    /// Largest coefficient gap between the first residual and `oc1 / gamma`.
    pub oc0_oc1_gap: f64,
}

pub fn adjoint_identity(law: &FeedbackLaw, paths: &[BrownianPath]) -> Result<AdjointReport> {
    let p = optimality_pieces(law)?;
    let gap = p.oc0.max_gap(&p.oc1, 1.0 / law.model.gamma);
    Ok(AdjointReport {
        oc0: p.oc0.report("oc0", &law.grid, paths, p.tail_oc / law.model.gamma),
        adjoint_equation: p.ae.report("adjoint", &law.grid, paths, p.tail_ae),
        oc0_oc1_gap: gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualKind {
    Sfie,
    Oc1,
    Oc0,
    Adjoint,
}

impl ResidualKind {
    pub fn evaluate(self, law: &FeedbackLaw, paths: &[BrownianPath]) -> Result<ResidualReport> {
        match self {
            ResidualKind::Sfie => sfie_residual(law, paths),
            ResidualKind::Oc1 => oc1_residual(law, paths),
            ResidualKind::Oc0 => Ok(adjoint_identity(law, paths)?.oc0),
            ResidualKind::Adjoint => Ok(adjoint_identity(law, paths)?.adjoint_equation),
        }
    }
}

/// Least-squares slope of `ln(residual)` against `ln(h)`.
pub fn fitted_order(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, r)| *h > 0.0 && *r > 0.0)
        .map(|(h, r)| (h.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Synthesize on `(horizon, n)` for each `n` in increasing order and collect
/// one residual per level. Sample paths are drawn on the finest grid and
/// coarsened, so every level sees the same Brownian motion.
pub fn refinement_study(
    model: &LqModel,
    horizon: f64,
    ns: &[usize],
    mu: Option<f64>,
    kind: ResidualKind,
    n_paths: usize,
    base_seed: u64,
) -> Result<ResidualReport> {
    let mut reports = refinement_study_all(model, horizon, ns, mu, &[kind], n_paths, base_seed)?;
    Ok(reports.remove(0))
}

/// Several residual kinds from one synthesis per level.
pub fn refinement_study_all(
    model: &LqModel,
    horizon: f64,
    ns: &[usize],
    mu: Option<f64>,
    kinds: &[ResidualKind],
    n_paths: usize,
    base_seed: u64,
) -> Result<Vec<ResidualReport>> {
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let finest = *ns.last().ok_or_else(|| Error::Precondition("no grid sizes".into()))?;
    let fine_grid = TimeGrid::new(horizon, finest)?;
    let fine_paths: Vec<BrownianPath> = (0..n_paths)
        .map(|i| sample_brownian(&fine_grid, base_seed.wrapping_add(i as u64)))
        .collect();
    let mut levels: Vec<Vec<ResidualReport>> = Vec::new();
    for &n in &ns {
        if finest % n != 0 {
            return Err(Error::InvalidGrid(format!("{n} does not divide {finest}")));
        }
        let grid = TimeGrid::new(horizon, n)?;
        let law = synthesize(model, &grid, mu)?;
        let paths = fine_paths
            .iter()
            .map(|w| w.coarsen(finest / n))
            .collect::<Result<Vec<_>>>()?;
        levels.push(
            kinds
                .iter()
                .map(|k| k.evaluate(&law, &paths))
                .collect::<Result<_>>()?,
        );
    }
    let mut finest_reports = levels.pop().expect("at least one level");
    for (idx, report) in finest_reports.iter_mut().enumerate() {
        let mut per_refinement: Vec<(f64, f64)> = levels
            .iter()
            .map(|l| (l[idx].grid.h(), l[idx].sup_residual))
            .collect();
        per_refinement.push((report.grid.h(), report.sup_residual));
        report.fitted_order = fitted_order(&per_refinement);
        report.per_refinement = per_refinement;
    }
    Ok(finest_reports)
}

/// Each level at most `1 + slack` times the previous one.
pub fn shrinks_monotonically(per_refinement: &[(f64, f64)], slack: f64) -> bool {
    per_refinement
        .windows(2)
        .all(|w| w[1].1 <= (1.0 + slack) * w[0].1)
}

/// Raised-cosine bump `sign * (1 + cos(pi (t - center) / width)) / 2` on `|t - center| < width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub center: f64,
    pub width: f64,
    pub sign: f64,
}

impl Perturbation {
    pub fn random(rng: &mut impl Rng, horizon: f64) -> Self {
        Self {
            center: rng.random_range(0.0..0.5 * horizon),
            width: rng.random_range(0.3..1.5),
            sign: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        }
    }

    pub fn sample(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.nodes()
            .iter()
            .map(|t| {
                let z = (t - self.center) / self.width;
                if z.abs() < 1.0 {
                    self.sign * 0.5 * (1.0 + (std::f64::consts::PI * z).cos())
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub perturbation: Perturbation,
    /// Fitted `a` in `Delta J(eps) ~ a eps^2 + b eps`.
    pub curvature: f64,
    /// `(1/2) int e^{-lambda t} (xi^2 + w^2/gamma) dt` by the trapezoid rule.
    pub curvature_exact: f64,
    pub slope: f64,
    pub slope_se: f64,
    /// `(eps, mean Delta J, standard error)`.
    pub delta_j: Vec<(f64, f64, f64)>,
    pub curvature_positive: bool,
    pub slope_within_2se: bool,
    pub no_significant_decrease: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominanceReport {
    pub probes: Vec<ProbeResult>,
    /// Paths per perturbation.
    pub n_paths: usize,
    pub base_seed: u64,
    pub epsilons: Vec<f64>,
}

impl DominanceReport {
    pub fn slope_passes(&self) -> usize {
        self.probes.iter().filter(|p| p.slope_within_2se).count()
    }

    pub fn all_curvatures_positive(&self) -> bool {
        self.probes.iter().all(|p| p.curvature_positive)
    }

    pub fn all_nonnegative(&self) -> bool {
        self.probes.iter().all(|p| p.no_significant_decrease)
    }

    /// First probe with non-positive curvature or a significant cost decrease.
    pub fn first_failure(&self) -> Option<&ProbeResult> {
        self.probes
            .iter()
            .find(|p| !p.curvature_positive || !p.no_significant_decrease)
    }
}

/// Compare `J(u^ + eps w_k)` with `J(u^)` on common paths for random bumps `w_k`.
///
/// The scheme is linear, so the perturbed state is `X^ + eps xi_k` with
/// `xi_k` the noise-free response to `w_k` from a zero initial state.
pub fn cost_dominance(
    law: &FeedbackLaw,
    n_perturbations: usize,
    epsilons: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<DominanceReport> {
    if n_paths < 2 {
        return Err(Error::Precondition("dominance needs at least 2 paths".into()));
    }
    if epsilons.is_empty() || epsilons.contains(&0.0) {
        return Err(Error::Precondition("epsilons must be nonzero".into()));
    }
    let model = law.model;
    let grid = law.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<Perturbation> = (0..n_perturbations)
        .map(|_| Perturbation::random(&mut rng, grid.horizon()))
        .collect();
    let controls: Vec<Vec<f64>> = bumps.iter().map(|b| b.sample(&grid)).collect();

    let linear = FracScheme::new(
        &LqModel {
            x0: 0.0,
            sigma: 0.0,
            ..model
        },
        &grid,
    )?;
    let quiet = BrownianPath {
        grid,
        increments: vec![0.0; grid.n()],
        seed: 0,
    };
    let responses = controls
        .iter()
        .map(|w| {
            Ok(linear
                .simulate(&SamplePath::new(grid, w.clone(), PathKind::Control)?, &quiet)?
                .values)
        })
        .collect::<Result<Vec<_>>>()?;

    // Each perturbation gets its own block of paths, so the slope tests are
    // independent across perturbations; within a block the base and
    // perturbed costs share the same increments.
    let scheme = FracScheme::new(&model, &grid)?;
    let block_seed = |k: usize| {
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((k as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03))
    };
    // per_probe[k][p][e] = Delta J for bump k, path p, epsilon e.
    let per_probe: Vec<Vec<Vec<f64>>> = (0..n_perturbations)
        .map(|k| {
            (0..n_paths)
                .into_par_iter()
                .map(|p| {
                    let w = sample_brownian(&grid, block_seed(k).wrapping_add(p as u64));
                    let opt = optimal_paths_with(law, &scheme, &w)?;
                    let (u, x) = (&opt.control.values, &opt.state.values);
                    let base = path_cost(&model, &grid, u, x);
                    Ok(epsilons
                        .iter()
                        .map(|&e| {
                            let ue: Vec<f64> = u.iter().zip(&controls[k]).map(|(a, b)| a + e * b).collect();
                            let xe: Vec<f64> = x.iter().zip(&responses[k]).map(|(a, b)| a + e * b).collect();
                            path_cost(&model, &grid, &ue, &xe) - base
                        })
                        .collect())
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let s2: f64 = epsilons.iter().map(|e| e * e).sum();
    let s4: f64 = epsilons.iter().map(|e| e.powi(4)).sum();
    let s3: f64 = epsilons.iter().map(|e| e.powi(3)).sum();
    let det = s4 * s2 - s3 * s3;
    let probes = bumps
        .iter()
        .enumerate()
        .map(|(k, bump)| {
            // Per-path least squares for a eps^2 + b eps.
            let (mut a_p, mut b_p) = (Vec::with_capacity(n_paths), Vec::with_capacity(n_paths));
            for dj in &per_probe[k] {
                let y2: f64 = epsilons.iter().zip(dj).map(|(e, v)| e * e * v).sum();
                let y1: f64 = epsilons.iter().zip(dj).map(|(e, v)| e * v).sum();
                a_p.push((y2 * s2 - y1 * s3) / det);
                b_p.push((s4 * y1 - s3 * y2) / det);
            }
            let (curvature, _) = mean_and_se(&a_p);
            let (slope, slope_se) = mean_and_se(&b_p);
            let delta_j: Vec<(f64, f64, f64)> = epsilons
                .iter()
                .enumerate()
                .map(|(e, &eps)| {
                    let v: Vec<f64> = per_probe[k].iter().map(|p| p[e]).collect();
                    let (mean, se) = mean_and_se(&v);
                    (eps, mean, se)
                })
                .collect();
            let xi = &responses[k];
            let wk = &controls[k];
            let curvature_exact = path_cost(&model, &grid, wk, xi);
            ProbeResult {
                perturbation: *bump,
                curvature,
                curvature_exact,
                slope,
                slope_se,
                curvature_positive: curvature > 0.0,
                slope_within_2se: slope.abs() < 2.0 * slope_se,
                no_significant_decrease: delta_j.iter().all(|(_, m, se)| *m >= -3.0 * se),
                delta_j,
            }
        })
        .collect();
    Ok(DominanceReport {
        probes,
        n_paths,
        base_seed: seed,
        epsilons: epsilons.to_vec(),
    })
}

/// Scalar algebraic Riccati solution for the undelayed classical case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiOracle {
    /// Root of `c^2 gamma P^2 + lambda P - 1 = 0`.
    pub p: f64,
    /// `-c gamma P x0`.
    pub u0: f64,
    /// `P x0^2 / 2`.
    pub j_star: f64,
}

pub fn riccati_oracle(model: &LqModel) -> Result<RiccatiOracle> {
    model.validate()?;
    if model.b != 0.0 || model.delta != 0.0 || model.alpha != 1.0 || model.sigma != 0.0 {
        return Err(Error::Precondition(
            "Riccati oracle needs b = 0, delta = 0, alpha = 1, sigma = 0".into(),
        ));
    }
    let k = model.c * model.c * model.gamma;
    // Rationalized root, stable for large lambda.
    let p = 2.0 / (model.lambda + (model.lambda * model.lambda + 4.0 * k).sqrt());
    Ok(RiccatiOracle {
        p,
        u0: -model.c * model.gamma * p * model.x0,
        j_star: 0.5 * p * model.x0 * model.x0,
    })
}
