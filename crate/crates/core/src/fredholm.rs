// SPDX-License-Identifier: Apache-2.0

//! Nyström discretization of the two-sided kernel, its resolvent, and the
//! deterministic Fredholm equations for the feedback law.
//!
//! Rows are collocated at the nodes `t_0..t_{n-1}`; unknowns are
//! piecewise constant on the cells `[t_j, t_{j+1})`. Every matrix entry is
//! the exact integral of the kernel over a cell. Because the kernel depends
//! only on `t - s`, all entries come from offset tables built from `2n`
//! half-cell integrals.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernels::KernelEvaluator;
use crate::model::LqModel;

pub const RESOLVENT_TOL: f64 = 1e-10;
pub const FIE_TOL: f64 = 1e-9;
pub const ROUTE_TOL: f64 = 1e-8;

/// Cell integrals of the kernel indexed by offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelTables {
    /// `int_{mh}^{(m+1)h} g`, `m = 0..n`.
    pub lower: Vec<f64>,
    /// `int_{mh}^{(m+1)h} e^{-lambda tau} g`.
    pub upper: Vec<f64>,
    /// As `lower` with the extra weight `e^{-mu tau}`.
    pub lower_weighted: Vec<f64>,
    /// As `upper` with the extra weight `e^{mu tau}`.
    pub upper_weighted: Vec<f64>,
    /// Rows collocated at `t_i + h/2`: offset `m >= 1` covers `[(m - 1/2)h, (m + 1/2)h]`,
    /// offset 0 is the half cell `[0, h/2]`.
    pub mid_lower: Vec<f64>,
    pub mid_upper: Vec<f64>,
}

impl KernelTables {
    pub fn build(ev: &KernelEvaluator, grid: &TimeGrid, mu: f64) -> Result<Self> {
        let n = grid.n();
        let half = 0.5 * grid.h();
        let lambda = ev.model().lambda;
        let kappas = [0.0, lambda, mu, lambda - mu];
        let halves: Vec<[f64; 4]> = (0..2 * n)
            .into_par_iter()
            .map(|k| ev.g_moments(k as f64 * half, (k + 1) as f64 * half, kappas))
            .collect::<Result<_>>()?;
        let pair = |a: usize, b: usize, c: usize| halves[a][c] + halves[b][c];
        let lower = (0..n).map(|m| pair(2 * m, 2 * m + 1, 0)).collect();
        let upper = (0..n).map(|m| pair(2 * m, 2 * m + 1, 1)).collect();
        let lower_weighted = (0..n).map(|m| pair(2 * m, 2 * m + 1, 2)).collect();
        let upper_weighted = (0..n).map(|m| pair(2 * m, 2 * m + 1, 3)).collect();
        let mid = |c: usize| {
            (0..n)
                .map(|m| if m == 0 { halves[0][c] } else { pair(2 * m - 1, 2 * m, c) })
                .collect::<Vec<_>>()
        };
        Ok(Self {
            lower,
            upper,
            lower_weighted,
            upper_weighted,
            mid_lower: mid(0),
            mid_upper: mid(1),
        })
    }

    /// Entry for collocation node `i` (may equal `n`) and cell `j`.
    #[inline]
    pub fn node_entry(&self, i: usize, j: usize) -> f64 {
        if j < i {
            self.lower[i - j - 1]
        } else {
            self.upper[j - i]
        }
    }

    /// Entry for collocation point `t_i + h/2` and cell `j`.
    #[inline]
    pub fn mid_entry(&self, i: usize, j: usize) -> f64 {
        match j.cmp(&i) {
            std::cmp::Ordering::Less => self.mid_lower[i - j],
            std::cmp::Ordering::Equal => self.mid_lower[0] + self.mid_upper[0],
            std::cmp::Ordering::Greater => self.mid_upper[j - i],
        }
    }

    /// Max of row and column absolute sums of the `e^{-mu(t-s)}`-weighted entries.
    pub fn weighted_norm(&self) -> f64 {
        let n = self.lower.len();
        let prefix = |v: &[f64]| {
            let mut p = vec![0.0; v.len() + 1];
            for (k, x) in v.iter().enumerate() {
                p[k + 1] = p[k] + x.abs();
            }
            p
        };
        let pl = prefix(&self.lower_weighted);
        let pu = prefix(&self.upper_weighted);
        let mut norm = 0.0_f64;
        for i in 0..n {
            // Row i: lower offsets 0..i, upper offsets 0..n-i.
            let row = pl[i] + pu[n - i];
            // Column j = i: lower offsets 0..n-1-j, upper offsets 0..=j.
            let col = pl[n - 1 - i] + pu[i + 1];
            norm = norm.max(row).max(col);
        }
        norm
    }
}

#[derive(Debug, Clone)]
pub struct DiscretizedKernel {
    pub grid: TimeGrid,
    pub mu: f64,
    pub norm_estimate: f64,
    pub tables: KernelTables,
    pub weights: DMatrix<f64>,
}

/// Assemble the Nyström matrix. Fails outside the contraction regime.
pub fn discretize(model: &LqModel, grid: &TimeGrid, mu: f64) -> Result<DiscretizedKernel> {
    let ev = KernelEvaluator::new(*model);
    discretize_with(&ev, grid, mu)
}

pub fn discretize_with(ev: &KernelEvaluator, grid: &TimeGrid, mu: f64) -> Result<DiscretizedKernel> {
    let model = ev.model();
    model.admissibility(Some(mu))?;
    grid.delay_steps(model.delta)?;
    let tables = KernelTables::build(ev, grid, mu)?;
    let norm_estimate = tables.weighted_norm();
    if norm_estimate >= 1.0 {
        return Err(Error::Contraction {
            norm: norm_estimate,
        });
    }
    let n = grid.n();
    let weights = DMatrix::from_fn(n, n, |i, j| tables.node_entry(i, j));
    Ok(DiscretizedKernel {
        grid: *grid,
        mu,
        norm_estimate,
        tables,
        weights,
    })
}

impl DiscretizedKernel {
    /// Wrap an explicit matrix (no offset tables); used for small algebraic checks.
    pub fn from_matrix(grid: TimeGrid, weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != grid.n() || weights.ncols() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "matrix is {}x{} but grid has {} cells",
                weights.nrows(),
                weights.ncols(),
                grid.n()
            )));
        }
        let norm_estimate = inf_norm(&weights).max(inf_norm(&weights.transpose()));
        Ok(Self {
            grid,
            mu: 0.0,
            norm_estimate,
            tables: KernelTables {
                lower: vec![],
                upper: vec![],
                lower_weighted: vec![],
                upper_weighted: vec![],
                mid_lower: vec![],
                mid_upper: vec![],
            },
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.weights * DVector::from_column_slice(x);
        v.as_slice().to_vec()
    }

    /// Nyström interpolant at node `i` (`0 <= i <= n`): `a_i - sum_j K(t_i, cell j) x_j`.
    pub fn interpolate_node(&self, i: usize, x: &[f64], a_i: f64) -> f64 {
        a_i - x
            .iter()
            .enumerate()
            .map(|(j, xj)| self.tables.node_entry(i, j) * xj)
            .sum::<f64>()
    }

    /// Nyström interpolant at the midpoints `t_i + h/2`, `i = 0..n`.
    pub fn interpolate_midpoints(&self, x: &[f64], a_mid: &[f64]) -> Vec<f64> {
        (0..self.n())
            .into_par_iter()
            .map(|i| {
                a_mid[i]
                    - x.iter()
                        .enumerate()
                        .map(|(j, xj)| self.tables.mid_entry(i, j) * xj)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Sup over nodes of `|x + Kx - a|`.
    pub fn fie_residual(&self, x: &[f64], a: &[f64]) -> f64 {
        let kx = self.apply(x);
        x.iter()
            .zip(&kx)
            .zip(a)
            .map(|((xi, ki), ai)| (xi + ki - ai).abs())
            .fold(0.0, f64::max)
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Something that applies the discretized resolvent to a vector.
pub trait ResolventAction {
    fn apply_resolvent(&self, a: &[f64]) -> Vec<f64>;
}

/// LU factorization of `I + K`, the canonical solver.
pub struct FredholmSystem {
    kernel: DiscretizedKernel,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl FredholmSystem {
    pub fn new(kernel: DiscretizedKernel) -> Result<Self> {
        let n = kernel.n();
        let lu = (DMatrix::identity(n, n) + &kernel.weights).lu();
        let diag = lu.u().diagonal();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for d in diag.iter() {
            lo = lo.min(d.abs());
            hi = hi.max(d.abs());
        }
        let condition = hi / lo;
        if !condition.is_finite() || condition > 1e14 {
            return Err(Error::Singular { condition });
        }
        Ok(Self { kernel, lu })
    }

    pub fn kernel(&self) -> &DiscretizedKernel {
        &self.kernel
    }

    /// Solve `x + Kx = a`.
    pub fn solve(&self, a: &[f64]) -> Vec<f64> {
        let x = self
            .lu
            .solve(&DVector::from_column_slice(a))
            .expect("factorization checked nonsingular");
        x.as_slice().to_vec()
    }
}

impl ResolventAction for FredholmSystem {
    /// `R a = (I + K)^{-1} K a`.
    fn apply_resolvent(&self, a: &[f64]) -> Vec<f64> {
        self.solve(&self.kernel.apply(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolventMethod {
    Neumann,
    Direct,
}

#[derive(Debug, Clone)]
pub struct ResolventMatrix {
    pub grid: TimeGrid,
    pub values: DMatrix<f64>,
    pub method: ResolventMethod,
    pub iterations: usize,
}

impl ResolventMatrix {
    /// `(||R + KR - K||_inf, ||R + RK - K||_inf)`.
    pub fn residuals(&self, k: &DiscretizedKernel) -> (f64, f64) {
        let r = &self.values;
        let kk = &k.weights;
        let left = r + kk * r - kk;
        let right = r + r * kk - kk;
        (inf_norm(&left), inf_norm(&right))
    }

    pub fn distance(&self, other: &ResolventMatrix) -> f64 {
        inf_norm(&(&self.values - &other.values))
    }
}

impl ResolventAction for ResolventMatrix {
    fn apply_resolvent(&self, a: &[f64]) -> Vec<f64> {
        (&self.values * DVector::from_column_slice(a))
            .as_slice()
            .to_vec()
    }
}

/// `R = sum_{m>=1} (-1)^{m+1} K^m`, stopped when a term's inf-norm drops below `tol`.
pub fn neumann_resolvent(k: &DiscretizedKernel, tol: f64, max_iter: usize) -> Result<ResolventMatrix> {
    if k.norm_estimate >= 1.0 {
        return Err(Error::Contraction {
            norm: k.norm_estimate,
        });
    }
    let mut sum = k.weights.clone();
    let mut term = k.weights.clone();
    let mut iterations = 1;
    let mut size = inf_norm(&term);
    while size >= tol {
        if iterations >= max_iter {
            return Err(Error::NeumannNotConverged {
                iterations,
                residual: size,
            });
        }
        term = -(&k.weights * &term);
        sum += &term;
        size = inf_norm(&term);
        iterations += 1;
    }
    let r = ResolventMatrix {
        grid: k.grid,
        values: sum,
        method: ResolventMethod::Neumann,
        iterations,
    };
    let (left, right) = r.residuals(k);
    let worst = left.max(right);
    if worst >= 10.0 * tol.max(f64::EPSILON) {
        return Err(Error::NeumannNotConverged {
            iterations,
            residual: worst,
        });
    }
    Ok(r)
}

/// Solve `(I + K) R = K` densely.
pub fn direct_resolvent(k: &DiscretizedKernel) -> Result<ResolventMatrix> {
    let system = FredholmSystem::new(k.clone())?;
    let mut values = k.weights.clone();
    if !system.lu.solve_mut(&mut values) {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    Ok(ResolventMatrix {
        grid: k.grid,
        values,
        method: ResolventMethod::Direct,
        iterations: 0,
    })
}

/// `x = a - R a`, checked against `x + Kx = a`.
pub fn solve_fie(k: &DiscretizedKernel, r: &dyn ResolventAction, a: &[f64]) -> Result<Vec<f64>> {
    if a.len() != k.n() {
        return Err(Error::GridMismatch(format!(
            "forcing has {} samples, kernel has {} cells",
            a.len(),
            k.n()
        )));
    }
    let ra = r.apply_resolvent(a);
    let x: Vec<f64> = a.iter().zip(&ra).map(|(ai, ri)| ai - ri).collect();
    let residual = k.fie_residual(&x, a);
    let tolerance = FIE_TOL * sup(a).max(1.0);
    if residual >= tolerance {
        return Err(Error::Residual {
            what: "Fredholm equation",
            residual,
            tolerance,
        });
    }
    Ok(x)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solution of one deterministic Fredholm equation by two routes.
#[derive(Debug, Clone)]
pub struct FieSolution {
    /// Direct solve of `x + Kx = a` at nodes `t_0..t_{n-1}`.
    pub values: Vec<f64>,
    /// Resolvent closed form at the same nodes.
    pub closed_form: Vec<f64>,
    pub forcing: Vec<f64>,
    pub residual: f64,
    pub route_gap: f64,
}

fn two_routes(
    what: &'static str,
    system: &FredholmSystem,
    forcing: Vec<f64>,
    closed_form: Vec<f64>,
) -> Result<FieSolution> {
    let values = system.solve(&forcing);
    let scale = sup(&forcing).max(1.0);
    let residual = system.kernel().fie_residual(&values, &forcing);
    if residual >= FIE_TOL * scale {
        return Err(Error::Residual {
            what,
            residual,
            tolerance: FIE_TOL * scale,
        });
    }
    let route_gap = values
        .iter()
        .zip(&closed_form)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if route_gap >= ROUTE_TOL * scale {
        return Err(Error::RouteDisagreement {
            what,
            gap: route_gap,
            tolerance: ROUTE_TOL * scale,
        });
    }
    Ok(FieSolution {
        values,
        closed_form,
        forcing,
        residual,
        route_gap,
    })
}

/// `phi + K phi + K_lambda x0 = 0`, cross-checked against `K_lambda (R 1 - 1) x0`.
pub fn phi_hat(model: &LqModel, system: &FredholmSystem, r: &dyn ResolventAction) -> Result<FieSolution> {
    let n = system.kernel().n();
    let kx0 = model.k_constant() * model.x0;
    let r1 = r.apply_resolvent(&vec![1.0; n]);
    let closed = r1.iter().map(|v| kx0 * (v - 1.0)).collect();
    two_routes("phi_hat", system, vec![-kx0; n], closed)
}

/// Samples of `g_lambda` for the forcing of the `psi` equation: node values,
/// with the cell average used on a singular node, and midpoint values.
#[derive(Debug, Clone)]
pub struct ForcingSamples {
    /// `t_0..=t_n`.
    pub nodes: Vec<f64>,
    /// `t_i + h/2`, `i = 0..n`.
    pub midpoints: Vec<f64>,
}

pub fn g_samples(ev: &KernelEvaluator, k: &DiscretizedKernel) -> Result<ForcingSamples> {
    let grid = &k.grid;
    let h = grid.h();
    let nodes = (0..=grid.n())
        .map(|i| {
            let t = grid.t(i);
            if ev.is_singular(t) {
                Ok(k.tables.lower[i] / h)
            } else {
                ev.g_lambda(t)
            }
        })
        .collect::<Result<_>>()?;
    let midpoints = (0..grid.n())
        .map(|i| ev.g_lambda(grid.t(i) + 0.5 * h))
        .collect::<Result<_>>()?;
    Ok(ForcingSamples { nodes, midpoints })
}

/// `psi + K psi + (sigma/c) g = 0`, cross-checked against `(sigma/c)(R g - g)`.
pub fn psi_hat(
    model: &LqModel,
    system: &FredholmSystem,
    r: &dyn ResolventAction,
    g: &ForcingSamples,
) -> Result<FieSolution> {
    let n = system.kernel().n();
    let s = model.sigma / model.c;
    let gv = &g.nodes[..n];
    let rg = r.apply_resolvent(gv);
    let closed = rg.iter().zip(gv).map(|(a, b)| s * (a - b)).collect();
    two_routes("psi_hat", system, gv.iter().map(|v| -s * v).collect(), closed)
}
