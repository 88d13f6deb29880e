// SPDX-License-Identifier: Apache-2.0

//! Command-line driver: `synthesize`, `simulate`, `cost`, `verify`, `sweep`.
//!
//! Every CSV starts with a header row; provenance (resolved config and
//! criterion constants) follows the data as `#` comment lines.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{ControlChoice, RunConfig};
use crate::error::{Error, Result};
use crate::fredholm::{FIE_TOL, ROUTE_TOL};
use crate::grid::TimeGrid;
use crate::model::LqModel;
use crate::simulate::{sample_brownian, simulate_frac_sdde, PathKind, SamplePath};
use crate::synthesis::{
    cost_estimate, optimal_paths, synthesize, transform_t, ControlSource, FeedbackLaw,
};
use crate::verify::{
    adjoint_identity, cost_dominance, refinement_study_all, riccati_oracle, shrinks_monotonically,
    ResidualKind,
};

pub const THREADS_ENV: &str = "FRAC_LQR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "frac-lqr", version, about = "Optimal feedback for delayed fractional stochastic LQ problems")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `run.outputs`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Omit the generation-time line so repeated runs are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the feedback law and write its tables.
    Synthesize(Common),
    /// Write sample paths of the noise, control, state and transformed control.
    Simulate(Common),
    /// Monte Carlo estimate of the discounted cost.
    Cost {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        control: Option<ControlChoice>,
    },
    /// Residual, dominance and oracle checks; exit 1 if any fails.
    Verify(Common),
    /// Synthesize and price the law over a list of parameter values.
    Sweep(Common),
}

/// Parse `argv`, run, and return the process exit status:
/// 0 success, 1 failed check or numerical failure, 2 usage or config error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_)
        | Error::NotAdmissible { .. }
        | Error::InvalidMu { .. }
        | Error::InvalidGrid(_)
        | Error::DelayOffGrid { .. }
        | Error::Precondition(_)
        | Error::Config(_) => 2,
        _ => 1,
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Already-initialized pools (tests) keep their size.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Synthesize(c) => cmd_synthesize(&Context::new(&c)?).map(|_| true),
        Command::Simulate(c) => cmd_simulate(&Context::new(&c)?).map(|_| true),
        Command::Cost { common, control } => {
            let mut ctx = Context::new(&common)?;
            if let Some(ctl) = control {
                ctx.config.run.control = ctl;
            }
            cmd_cost(&ctx).map(|_| true)
        }
        Command::Verify(c) => cmd_verify(&Context::new(&c)?),
        Command::Sweep(c) => cmd_sweep(&Context::new(&c)?).map(|_| true),
    }
}

struct Context {
    config: RunConfig,
    out: PathBuf,
    timestamp: bool,
}

impl Context {
    fn new(c: &Common) -> Result<Self> {
        let mut config = RunConfig::load(&c.config)?;
        if let Some(s) = c.seed {
            config.run.base_seed = s;
        }
        if let Some(p) = c.paths {
            config.run.n_paths = p;
        }
        if let Some(n) = c.grid_n {
            config.grid.n = n;
        }
        if let Some(t) = c.horizon {
            config.grid.horizon = Some(t);
        }
        if let Some(o) = &c.out {
            config.run.outputs = o.clone();
        }
        config.model().validate()?;
        std::fs::create_dir_all(&config.run.outputs)?;
        Ok(Self {
            out: config.run.outputs.clone(),
            config,
            timestamp: !c.no_timestamp,
        })
    }

    fn model(&self) -> LqModel {
        self.config.model()
    }

    fn provenance(&self, grid: Option<&TimeGrid>) -> String {
        let config = &self.config;
        let m = config.model();
        let mu = m.admissibility(config.mu).map(|a| fmt(a.mu)).unwrap_or_else(|_| "none".into());
        let mut s = String::new();
        let _ = writeln!(s, "# config: {}", config.to_json());
        let _ = writeln!(
            s,
            "# constants: rho_alpha={},rho_tilde_alpha={},mu={},k_lambda={}",
            fmt(m.rho_alpha()),
            fmt(m.rho_tilde_alpha()),
            mu,
            fmt(m.k_constant())
        );
        if let Some(g) = grid {
            let _ = writeln!(s, "# grid: horizon={},n={},h={}", fmt(g.horizon()), g.n(), fmt(g.h()));
        }
        let _ = writeln!(s, "# version: {}", env!("CARGO_PKG_VERSION"));
        if self.timestamp {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let _ = writeln!(s, "# generated_unix: {secs}");
        }
        s
    }

    fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>], grid: Option<&TimeGrid>) -> Result<PathBuf> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s.push_str(&self.provenance(grid));
        let path = self.out.join(name);
        std::fs::write(&path, s)?;
        Ok(path)
    }
}

/// 17 significant digits.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn report_written(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn cmd_synthesize(ctx: &Context) -> Result<()> {
    let model = ctx.model();
    let grid = ctx.config.resolve_grid()?;
    let law = synthesize(&model, &grid, ctx.config.mu)?;
    let n = grid.n();

    let rows: Vec<Vec<String>> = (0..=n)
        .map(|i| vec![i.to_string(), fmt(grid.t(i)), fmt(law.phi_hat[i]), fmt(law.psi_hat[i])])
        .collect();
    report_written(&ctx.write_csv("law.csv", &["i", "t", "phi_hat", "psi_hat"], &rows, Some(&grid))?);

    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| vec![i.to_string(), fmt(grid.t(i) + 0.5 * grid.h()), fmt(law.psi_mid[i])])
        .collect();
    report_written(&ctx.write_csv("psi_mid.csv", &["i", "t", "psi_hat"], &rows, Some(&grid))?);

    let rows = constants_rows(&law);
    report_written(&ctx.write_csv("constants.csv", &["name", "value"], &rows, Some(&grid))?);
    println!(
        "rho_alpha={} rho_tilde_alpha={} mu={} k_lambda={} norm_estimate={}",
        law.constants.rho_alpha, law.constants.rho_tilde_alpha, law.constants.mu, law.k_const, law.norm_estimate
    );
    Ok(())
}

fn constants_rows(law: &FeedbackLaw) -> Vec<Vec<String>> {
    [
        ("rho_alpha", law.constants.rho_alpha),
        ("rho_tilde_alpha", law.constants.rho_tilde_alpha),
        ("mu", law.constants.mu),
        ("k_lambda", law.k_const),
        ("gain", law.gain),
        ("norm_estimate", law.norm_estimate),
        ("phi_residual", law.phi_residual),
        ("psi_residual", law.psi_residual),
        ("phi_route_gap", law.phi_route_gap),
        ("psi_route_gap", law.psi_route_gap),
        ("delay_steps", law.delay_steps as f64),
    ]
    .iter()
    .map(|(k, v)| vec![k.to_string(), fmt(*v)])
    .collect()
}

fn cmd_simulate(ctx: &Context) -> Result<()> {
    let model = ctx.model();
    let grid = ctx.config.resolve_grid()?;
    let run = &ctx.config.run;
    let law = match run.control {
        ControlChoice::Optimal => Some(synthesize(&model, &grid, ctx.config.mu)?),
        ControlChoice::Zero => None,
    };
    let paths: Vec<[Vec<f64>; 4]> = (0..run.n_paths)
        .into_par_iter()
        .map(|p| {
            let w = sample_brownian(&grid, run.base_seed.wrapping_add(p as u64));
            let (u, x) = match &law {
                Some(law) => {
                    let o = optimal_paths(law, &w)?;
                    (o.control, o.state)
                }
                None => {
                    let u = SamplePath::zeros(grid, PathKind::Control);
                    let x = simulate_frac_sdde(&model, &u, &w)?;
                    (u, x)
                }
            };
            let v = transform_t(&model, &u, &x)?;
            Ok([w.values(), u.values, x.values, v.values])
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(run.n_paths * (grid.n() + 1));
    for (p, [w, u, x, v]) in paths.iter().enumerate() {
        for i in 0..=grid.n() {
            rows.push(vec![
                p.to_string(),
                i.to_string(),
                fmt(grid.t(i)),
                fmt(w[i]),
                fmt(u[i]),
                fmt(x[i]),
                fmt(v[i]),
            ]);
        }
    }
    let header = ["path", "i", "t", "w", "u", "x", "v"];
    report_written(&ctx.write_csv("paths.csv", &header, &rows, Some(&grid))?);
    Ok(())
}

fn control_name(c: ControlChoice) -> &'static str {
    match c {
        ControlChoice::Zero => "zero",
        ControlChoice::Optimal => "optimal",
    }
}

fn cmd_cost(ctx: &Context) -> Result<()> {
    let model = ctx.model();
    let grid = ctx.config.resolve_grid()?;
    let run = &ctx.config.run;
    let law = match run.control {
        ControlChoice::Optimal => Some(synthesize(&model, &grid, ctx.config.mu)?),
        ControlChoice::Zero => None,
    };
    let source = match &law {
        Some(l) => ControlSource::Optimal(l),
        None => ControlSource::Zero,
    };
    let est = cost_estimate(&model, &source, &grid, run.n_paths, run.base_seed)?;
    let rows = vec![vec![
        control_name(run.control).to_string(),
        fmt(est.mean),
        fmt(est.std_error),
        est.n_paths.to_string(),
        est.base_seed.to_string(),
        fmt(est.horizon_truncation_bound),
    ]];
    let header = ["control", "mean", "std_error", "n_paths", "base_seed", "horizon_truncation_bound"];
    report_written(&ctx.write_csv("cost.csv", &header, &rows, Some(&grid))?);
    println!("J = {} +/- {} ({} paths)", est.mean, est.std_error, est.n_paths);
    Ok(())
}

struct Check {
    name: String,
    value: f64,
    threshold: f64,
    pass: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value < threshold,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }
}

fn cmd_verify(ctx: &Context) -> Result<bool> {
    let model = ctx.model();
    let cfg = &ctx.config;
    let opts = &cfg.verify;
    let seed = cfg.run.base_seed;
    let grid = cfg.resolve_grid()?;
    let law = synthesize(&model, &grid, cfg.mu)?;
    let mut checks = vec![
        Check::below("phi_fie_residual", law.phi_residual, FIE_TOL),
        Check::below("psi_fie_residual", law.psi_residual, FIE_TOL),
        Check::below("phi_route_gap", law.phi_route_gap, ROUTE_TOL),
        Check::below("psi_route_gap", law.psi_route_gap, ROUTE_TOL),
    ];

    // Refinement levels share one horizon on which the delay is on-grid for
    // the coarsest level.
    let horizon = match cfg.grid.horizon {
        Some(t) => t,
        None => {
            let coarsest = *opts.refinement.iter().min().unwrap_or(&grid.n());
            TimeGrid::default_for(&model, law.constants.mu, coarsest)?.horizon()
        }
    };
    let kinds = [ResidualKind::Sfie, ResidualKind::Oc1, ResidualKind::Oc0, ResidualKind::Adjoint];
    let reports = refinement_study_all(&model, horizon, &opts.refinement, cfg.mu, &kinds, opts.residual_paths, seed)?;
    let required = model.alpha - opts.order_slack;
    let mut residual_rows = Vec::new();
    let mut refinement_rows = Vec::new();
    for (kind, r) in kinds.iter().zip(&reports) {
        if matches!(kind, ResidualKind::Sfie | ResidualKind::Oc1) && r.per_refinement.len() >= 2 {
            checks.push(Check::at_least(
                format!("{}_order", r.name),
                r.fitted_order.unwrap_or(f64::NAN),
                required,
            ));
        }
        let monotone = shrinks_monotonically(&r.per_refinement, 0.2);
        checks.push(Check {
            name: format!("{}_shrinks", r.name),
            value: if monotone { 1.0 } else { 0.0 },
            threshold: 1.0,
            pass: monotone,
        });
        residual_rows.push(vec![
            r.name.clone(),
            r.grid.n().to_string(),
            fmt(r.sup_residual),
            fmt(r.l2_residual),
            fmt(r.pathwise_sup.unwrap_or(f64::NAN)),
            fmt(r.tail_bound),
            fmt(r.fitted_order.unwrap_or(f64::NAN)),
            r.n_paths.to_string(),
        ]);
        for (h, v) in &r.per_refinement {
            refinement_rows.push(vec![r.name.clone(), fmt(*h), fmt(*v)]);
        }
    }

    let adj = adjoint_identity(&law, &[])?;
    checks.push(Check::below("oc0_oc1_gap", adj.oc0_oc1_gap, 1e-12));

    let dom = cost_dominance(&law, opts.n_perturbations, &opts.epsilons, opts.dominance_paths, seed)?;
    checks.push(Check::at_least("dominance_curvature_positive", dom.all_curvatures_positive() as u8 as f64, 1.0));
    checks.push(Check::at_least("dominance_no_decrease", dom.all_nonnegative() as u8 as f64, 1.0));
    checks.push(Check::at_least(
        "dominance_slope_passes",
        dom.slope_passes() as f64,
        opts.min_slope_passes.min(opts.n_perturbations) as f64,
    ));
    if let Some(p) = dom.first_failure() {
        eprintln!("dominance failure: {p:?}");
    }
    let dominance_rows: Vec<Vec<String>> = dom
        .probes
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let margin = p
                .delta_j
                .iter()
                .map(|(_, m, se)| m + 3.0 * se)
                .fold(f64::INFINITY, f64::min);
            vec![
                k.to_string(),
                fmt(p.perturbation.center),
                fmt(p.perturbation.width),
                fmt(p.perturbation.sign),
                fmt(p.curvature),
                fmt(p.curvature_exact),
                fmt(p.slope),
                fmt(p.slope_se),
                fmt(margin),
                (p.curvature_positive && p.slope_within_2se && p.no_significant_decrease).to_string(),
            ]
        })
        .collect();

    if let Ok(oracle) = riccati_oracle(&model) {
        // Noise-free, so two paths give the exact discrete cost.
        let est = cost_estimate(&model, &ControlSource::Optimal(&law), &grid, 2, seed)?;
        let u0 = law.phi_hat[0] + law.gain * model.x0;
        checks.push(Check::below("riccati_cost_rel_gap", ((est.mean - oracle.j_star) / oracle.j_star).abs(), 0.01));
        checks.push(Check::below("riccati_u0_rel_gap", ((u0 - oracle.u0) / oracle.u0).abs(), 0.02));
    }

    let check_rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![c.name.clone(), fmt(c.value), fmt(c.threshold), c.pass.to_string()])
        .collect();
    report_written(&ctx.write_csv("verify.csv", &["check", "value", "threshold", "pass"], &check_rows, Some(&grid))?);
    let header = ["name", "n", "sup_residual", "l2_residual", "pathwise_sup", "tail_bound", "fitted_order", "n_paths"];
    report_written(&ctx.write_csv("residuals.csv", &header, &residual_rows, Some(&grid))?);
    report_written(&ctx.write_csv("refinement.csv", &["name", "h", "sup_residual"], &refinement_rows, Some(&grid))?);
    let header = [
        "perturbation", "center", "width", "sign", "curvature", "curvature_exact", "slope", "slope_se", "min_margin", "pass",
    ];
    report_written(&ctx.write_csv("dominance.csv", &header, &dominance_rows, Some(&grid))?);

    for c in &checks {
        println!("{} {} value={:e} threshold={:e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn cmd_sweep(ctx: &Context) -> Result<()> {
    let sweep = &ctx.config.sweep;
    if sweep.values.is_empty() {
        return Err(Error::Config("sweep.values is empty".into()));
    }
    let mut rows = Vec::new();
    for &value in &sweep.values {
        let mut cfg = ctx.config.clone();
        cfg.set_parameter(&sweep.parameter, value)?;
        let row = sweep_row(&cfg);
        let mut cells = vec![sweep.parameter.clone(), fmt(value)];
        match row {
            Ok(r) => {
                cells.push("ok".into());
                cells.extend(r.iter().map(|v| fmt(*v)));
            }
            Err(e) => {
                eprintln!("{}={value}: {e}", sweep.parameter);
                cells.push(status_name(&e).into());
                cells.extend(std::iter::repeat_n(fmt(f64::NAN), 10));
            }
        }
        rows.push(cells);
    }
    let header = [
        "parameter", "value", "status", "rho_alpha", "rho_tilde_alpha", "mu", "k_lambda", "norm_estimate", "horizon",
        "phi_hat_0", "u_0", "cost_mean", "cost_std_error",
    ];
    report_written(&ctx.write_csv("sweep.csv", &header, &rows, None)?);
    Ok(())
}

fn sweep_row(cfg: &RunConfig) -> Result<[f64; 10]> {
    let model = cfg.model();
    model.validate()?;
    let grid = cfg.resolve_grid()?;
    let law = synthesize(&model, &grid, cfg.mu)?;
    let est = cost_estimate(&model, &ControlSource::Optimal(&law), &grid, cfg.run.n_paths, cfg.run.base_seed)?;
    Ok([
        law.constants.rho_alpha,
        law.constants.rho_tilde_alpha,
        law.constants.mu,
        law.k_const,
        law.norm_estimate,
        grid.horizon(),
        law.phi_hat[0],
        law.phi_hat[0] + law.gain * model.x0,
        est.mean,
        est.std_error,
    ])
}

fn status_name(e: &Error) -> &'static str {
    match e {
        Error::NotAdmissible { .. } => "not_admissible",
        Error::Contraction { .. } => "contraction_failure",
        Error::InvalidParameter(_) | Error::InvalidMu { .. } => "invalid_parameter",
        Error::InvalidGrid(_) | Error::DelayOffGrid { .. } => "invalid_grid",
        _ => "numerical_failure",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, -1.0 / 3.0, 6.02e23, 5e-324, 0.0] {
            assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::NotAdmissible { lambda: 2.0, bound: 2.7 }), 2);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Contraction { norm: 1.1 }), 1);
        assert_eq!(exit_code(&Error::Singular { condition: 1e16 }), 1);
    }
}
