// SPDX-License-Identifier: Apache-2.0

//! Kernel functions of the Fredholm problem: `f_lambda`, `g_lambda`,
//! the two-sided kernel `k_lambda` and the `L^1` majorant bound.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::model::LqModel;
use crate::quadrature::integrate_vec;

pub fn gamma(x: f64) -> f64 {
    // The Lanczos fit is off by an ulp or two at 1 and 2; the alpha = 1
    // reductions rely on these being exact.
    if x == 1.0 || x == 2.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma(x)
}

/// `tau^{alpha-1} / Gamma(alpha)`.
///
/// # Panics
/// If `tau <= 0`; the kernel is only ever integrated across zero.
pub fn frac_kernel(alpha: f64, tau: f64) -> f64 {
    assert!(tau > 0.0, "frac_kernel evaluated at tau = {tau}");
    tau.powf(alpha - 1.0) / gamma(alpha)
}

/// `x_+^{p}` with the convention that the indicator is on `(0, inf)`.
fn positive_power(x: f64, p: f64) -> f64 {
    if x > 0.0 {
        x.powf(p)
    } else {
        0.0
    }
}

pub struct KernelEvaluator {
    model: LqModel,
    quad_tol: f64,
    gamma_alpha: f64,
    cache: RwLock<HashMap<u64, f64>>,
}

impl std::fmt::Debug for KernelEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelEvaluator")
            .field("model", &self.model)
            .field("quad_tol", &self.quad_tol)
            .finish_non_exhaustive()
    }
}

impl KernelEvaluator {
    pub const DEFAULT_TOL: f64 = 1e-10;

    pub fn new(model: LqModel) -> Self {
        Self::with_tolerance(model, Self::DEFAULT_TOL)
    }

    pub fn with_tolerance(model: LqModel, quad_tol: f64) -> Self {
        Self {
            model,
            quad_tol,
            gamma_alpha: gamma(model.alpha),
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn model(&self) -> &LqModel {
        &self.model
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn gamma_alpha(&self) -> f64 {
        self.gamma_alpha
    }

    /// `(1/Gamma(alpha)) int_0^inf e^{-lambda theta} theta^{alpha-1} (theta+tau)^{alpha-1} dtheta`.
    pub fn f_lambda(&self, tau: f64) -> Result<f64> {
        assert!(tau >= 0.0, "f_lambda evaluated at tau = {tau}");
        let key = tau.to_bits();
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = self.f_uncached(tau)?;
        self.cache.write().expect("cache lock").insert(key, v);
        Ok(v)
    }

    fn f_uncached(&self, tau: f64) -> Result<f64> {
        let a = self.model.alpha;
        let lam = self.model.lambda;
        let tol = 0.25 * self.quad_tol * self.gamma_alpha;

        // [0, 1] with theta = u^p, p = 1/(2 alpha - 1): the Jacobian cancels
        // theta^{alpha-1} and leaves p e^{-lambda theta} (theta/(theta+tau))^{1-alpha}.
        let p = 1.0 / (2.0 * a - 1.0);
        let near = integrate_vec(
            |u: f64| {
                let theta = u.powf(p);
                let ratio = if tau == 0.0 { 1.0 } else { theta / (theta + tau) };
                [p * (-lam * theta).exp() * ratio.powf(1.0 - a)]
            },
            0.0,
            1.0,
            tol,
            1e-13,
        )?;

        // [1, inf) with theta = 1 - ln(v)/lambda.
        let scale = (-lam).exp() / lam;
        let far = integrate_vec(
            |v: f64| {
                let theta = 1.0 - v.ln() / lam;
                [(theta * (theta + tau)).powf(a - 1.0)]
            },
            0.0,
            1.0,
            tol / scale.max(f64::MIN_POSITIVE),
            1e-13,
        )?;

        Ok((near.value[0] + scale * far.value[0]) / self.gamma_alpha)
    }

    /// True where `g_lambda` is unbounded: `tau = delta` with `b != 0`, `alpha < 1`.
    pub fn is_singular(&self, tau: f64) -> bool {
        self.model.b != 0.0 && self.model.alpha < 1.0 && tau == self.model.delta
    }

    /// `(C/Gamma(alpha)) f_lambda(tau) - (b/Gamma(alpha)) (tau - delta)_+^{alpha-1}` with
    /// `C = c^2 gamma + b^2 e^{-lambda delta}`.
    ///
    /// # Panics
    /// At the singular locus, see [`Self::is_singular`].
    pub fn g_lambda(&self, tau: f64) -> Result<f64> {
        assert!(
            tau >= 0.0 && !self.is_singular(tau),
            "g_lambda evaluated on a singular locus (tau = {tau})"
        );
        let m = &self.model;
        let f = self.f_lambda(tau)?;
        Ok((m.coupling() * f - m.b * positive_power(tau - m.delta, m.alpha - 1.0)) / self.gamma_alpha)
    }

    /// Two-sided kernel: `g(t-s)` below the diagonal, `e^{-lambda(s-t)} g(s-t)` above.
    pub fn k_lambda(&self, t: f64, s: f64) -> Result<f64> {
        if t >= s {
            self.g_lambda(t - s)
        } else {
            Ok((-self.model.lambda * (s - t)).exp() * self.g_lambda(s - t)?)
        }
    }

    /// Right side of the pointwise bound
    /// `|g(tau)| <= (C/Gamma) lambda^{-alpha} tau^{alpha-1} + (|b|/Gamma)(tau-delta)_+^{alpha-1}`.
    pub fn growth_bound(&self, tau: f64) -> f64 {
        let m = &self.model;
        (m.coupling() * m.lambda.powf(-m.alpha) * tau.powf(m.alpha - 1.0)
            + m.b.abs() * positive_power(tau - m.delta, m.alpha - 1.0))
            / self.gamma_alpha
    }

    /// `int_a^b e^{-kappa_k tau} f_lambda(tau) dtau` for each weight `kappa_k`, sharing abscissae.
    pub fn f_moments<const K: usize>(&self, a: f64, b: f64, kappas: [f64; K]) -> Result<[f64; K]> {
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let q = integrate_vec(
            |tau: f64| match self.f_uncached(tau) {
                Ok(f) => kappas.map(|k| (-k * tau).exp() * f),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    [0.0; K]
                }
            },
            a,
            b,
            self.quad_tol * (b - a),
            1e-12,
        )?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(q.value)
    }

    /// `int_a^b e^{-kappa_k tau} (tau - delta)_+^{alpha-1} dtau` for each `kappa_k`.
    /// Zero-weight components use the closed form `(x_1^alpha - x_0^alpha)/alpha`.
    pub fn delay_moments<const K: usize>(&self, a: f64, b: f64, kappas: [f64; K]) -> Result<[f64; K]> {
        let (alpha, delta) = (self.model.alpha, self.model.delta);
        if b <= delta {
            return Ok([0.0; K]);
        }
        let x0 = (a - delta).max(0.0);
        let x1 = b - delta;
        let shift = kappas.map(|k| (-k * delta).exp());
        let mut out = if alpha == 1.0 {
            kappas.map(|k| {
                if k == 0.0 {
                    x1 - x0
                } else {
                    ((-k * x0).exp() - (-k * x1).exp()) / k
                }
            })
        } else if x0 == 0.0 {
            // x = u^{1/alpha} absorbs the endpoint singularity.
            let inv = 1.0 / alpha;
            integrate_vec(
                |u: f64| {
                    let x = u.powf(inv);
                    kappas.map(|k| (-k * x).exp() * inv)
                },
                0.0,
                x1.powf(alpha),
                self.quad_tol * (b - a),
                1e-13,
            )?
            .value
        } else {
            integrate_vec(
                |x: f64| {
                    let s = x.powf(alpha - 1.0);
                    kappas.map(|k| (-k * x).exp() * s)
                },
                x0,
                x1,
                self.quad_tol * (b - a),
                1e-13,
            )?
            .value
        };
        for k in 0..K {
            if kappas[k] == 0.0 {
                out[k] = (x1.powf(alpha) - x0.powf(alpha)) / alpha;
            }
            out[k] *= shift[k];
        }
        Ok(out)
    }

    /// `int_a^b e^{-kappa_k tau} g_lambda(tau) dtau` for each `kappa_k`.
    pub fn g_moments<const K: usize>(&self, a: f64, b: f64, kappas: [f64; K]) -> Result<[f64; K]> {
        let m = &self.model;
        let f = self.f_moments(a, b, kappas)?;
        let d = if m.b != 0.0 {
            self.delay_moments(a, b, kappas)?
        } else {
            [0.0; K]
        };
        let mut out = [0.0; K];
        for k in 0..K {
            out[k] = (m.coupling() * f[k] - m.b * d[k]) / self.gamma_alpha;
        }
        Ok(out)
    }
}

/// `2 {(c^2 gamma + b^2 e^{-2 mu delta})(2 mu)^{-alpha} + |b| e^{-mu delta}} mu^{-alpha}`.
pub fn m_mu_norm_bound(model: &LqModel, mu: f64) -> f64 {
    let m = model;
    2.0 * ((m.c * m.c * m.gamma + m.b * m.b * (-2.0 * mu * m.delta).exp()) * (2.0 * mu).powf(-m.alpha)
        + m.b.abs() * (-mu * m.delta).exp())
        * mu.powf(-m.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alpha_one(b: f64, lambda: f64, delta: f64) -> LqModel {
        LqModel {
            x0: 1.0,
            b,
            c: 1.0,
            sigma: 0.5,
            gamma: 1.0,
            alpha: 1.0,
            delta,
            lambda,
        }
    }

    fn with_alpha(alpha: f64, lambda: f64) -> LqModel {
        LqModel {
            alpha,
            lambda,
            ..crate::model::test_model()
        }
    }

    #[test]
    fn gamma_reference_values() {
        assert!((gamma(1.0) - 1.0).abs() < 1e-12);
        assert!((gamma(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!((gamma(0.75) - 1.225_416_702_465_177_6).abs() < 1e-12);
    }

    #[test]
    fn frac_kernel_examples() {
        assert_eq!(frac_kernel(1.0, 3.7), 1.0);
        assert!((frac_kernel(0.75, 1.0) - 1.0 / 1.225_416_702_465_177_6).abs() < 1e-12);
        assert!((frac_kernel(0.75, 16.0) - 0.5 / 1.225_416_702_465_177_6).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn frac_kernel_rejects_zero() {
        frac_kernel(0.75, 0.0);
    }

    #[test]
    fn f_lambda_alpha_one_is_inverse_lambda() {
        let ev = KernelEvaluator::new(alpha_one(0.0, 2.0, 0.0));
        for tau in [0.0, 0.3, 5.0, 40.0] {
            assert!((ev.f_lambda(tau).unwrap() - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn f_lambda_at_zero_closed_form() {
        for alpha in [0.6, 0.75, 0.9] {
            for lambda in [0.5, 1.0, 3.0] {
                let ev = KernelEvaluator::new(with_alpha(alpha, lambda));
                let exact =
                    gamma(2.0 * alpha - 1.0) * lambda.powf(1.0 - 2.0 * alpha) / gamma(alpha);
                let got = ev.f_lambda(0.0).unwrap();
                assert!((got - exact).abs() < 1e-9, "alpha {alpha} lambda {lambda}: {got} vs {exact}");
            }
        }
        let ev = KernelEvaluator::new(with_alpha(0.75, 1.0));
        assert!((ev.f_lambda(0.0).unwrap() - 1.44641).abs() < 1e-5);
    }

    #[test]
    fn f_lambda_cache_reproduces() {
        let ev = KernelEvaluator::new(with_alpha(0.7, 1.3));
        let a = ev.f_lambda(0.37).unwrap();
        let b = ev.f_lambda(0.37).unwrap();
        let fresh = ev.f_uncached(0.37).unwrap();
        assert_eq!(a, b);
        assert!((a - fresh).abs() <= ev.quad_tol());
    }

    #[test]
    fn g_lambda_alpha_one_closed_forms() {
        let ev = KernelEvaluator::new(alpha_one(0.0, 2.0, 0.0));
        for tau in [0.1, 1.0, 7.0] {
            assert!((ev.g_lambda(tau).unwrap() - 0.5).abs() < 1e-10);
        }
        let ev = KernelEvaluator::new(alpha_one(1.0, 1.0, 1.0));
        let e1 = (-1.0f64).exp();
        assert!((ev.g_lambda(2.0).unwrap() - e1).abs() < 1e-10);
        assert!((ev.g_lambda(0.5).unwrap() - (1.0 + e1)).abs() < 1e-10);
    }

    #[test]
    #[should_panic]
    fn g_lambda_rejects_delay_singularity() {
        let ev = KernelEvaluator::new(crate::model::test_model());
        let _ = ev.g_lambda(0.5);
    }

    #[test]
    fn k_lambda_branches() {
        let ev = KernelEvaluator::new(alpha_one(0.0, 1.0, 0.0));
        assert!((ev.k_lambda(2.0, 3.0).unwrap() - (-1.0f64).exp()).abs() < 1e-10);
        let ev = KernelEvaluator::new(alpha_one(1.0, 1.0, 1.0));
        assert_eq!(ev.k_lambda(3.0, 2.0).unwrap(), ev.g_lambda(1.0).unwrap());
        let ev = KernelEvaluator::new(crate::model::test_model());
        for (t, s) in [(0.2, 1.3), (1.0, 4.1), (0.0, 0.7)] {
            let up = ev.k_lambda(t, s).unwrap();
            let down = ev.k_lambda(s, t).unwrap();
            assert!((up - (-3.0 * (s - t)).exp() * down).abs() < 1e-14);
        }
    }

    #[test]
    fn m_mu_examples() {
        let m = alpha_one(0.0, 4.0, 0.0);
        assert!((m_mu_norm_bound(&m, 1.0) - 1.0).abs() < 1e-15);
        assert!((m_mu_norm_bound(&m, 2.0) - 0.25).abs() < 1e-15);
        let r = crate::model::test_model();
        assert!(m_mu_norm_bound(&r, r.rho_tilde_alpha() + 0.1) < 1.0);
        let b0 = LqModel { b: 0.0, ..r };
        assert!((m_mu_norm_bound(&b0, b0.rho_tilde_alpha()) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn moments_match_closed_forms_at_alpha_one() {
        let ev = KernelEvaluator::new(alpha_one(0.7, 2.0, 1.0));
        let [plain, weighted] = ev.f_moments(0.5, 1.5, [0.0, 2.0]).unwrap();
        assert!((plain - 0.5).abs() < 1e-12);
        let exact = 0.5 * ((-1.0f64).exp() - (-3.0f64).exp()) / 2.0;
        assert!((weighted - exact).abs() < 1e-12);
        let [d0, d1] = ev.delay_moments(0.5, 1.5, [0.0, 2.0]).unwrap();
        assert!((d0 - 0.5).abs() < 1e-15);
        assert!((d1 - ((-2.0f64).exp() - (-3.0f64).exp()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn delay_moments_singular_cell() {
        let m = crate::model::test_model();
        let ev = KernelEvaluator::new(m);
        let h = 0.125;
        let [d0, d1] = ev.delay_moments(0.5, 0.5 + h, [0.0, 3.0]).unwrap();
        assert!((d0 - h.powf(0.75) / 0.75).abs() < 1e-15);
        // Incomplete-gamma series for e^{-3 delta} int_0^h e^{-3x} x^{-1/4} dx.
        let mut series = 0.0;
        let mut term = 1.0;
        for k in 0..40 {
            if k > 0 {
                term *= -3.0 * h / k as f64;
            }
            series += term / (k as f64 + 0.75);
        }
        let exact = (-1.5f64).exp() * h.powf(0.75) * series;
        assert!((d1 - exact).abs() < 1e-13, "{d1} vs {exact}");
    }

    /// Kummer's M by its power series (all terms positive for a, b > 0).
    fn kummer_m(a: f64, b: f64, z: f64) -> f64 {
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 0..500 {
            let k = k as f64;
            term *= (a + k) / (b + k) * z / (k + 1.0);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    }

    /// Tricomi's U for non-integer b via the two-M connection formula.
    fn tricomi_u(a: f64, b: f64, z: f64) -> f64 {
        gamma(1.0 - b) / gamma(a - b + 1.0) * kummer_m(a, b, z)
            + gamma(b - 1.0) / gamma(a) * z.powf(1.0 - b) * kummer_m(a - b + 1.0, 2.0 - b, z)
    }

    #[test]
    fn f_lambda_matches_tricomi_identity() {
        // f(tau) = tau^{2 alpha - 1} U(alpha, 2 alpha, lambda tau)
        for (alpha, lambda, tau) in [(0.75, 2.0, 1.0), (0.6, 0.7, 0.3), (0.9, 3.5, 1.7), (0.55, 1.0, 2.5_f64)] {
            let ev = KernelEvaluator::new(LqModel { alpha, lambda, ..crate::model::test_model() });
            let oracle = tau.powf(2.0 * alpha - 1.0) * tricomi_u(alpha, 2.0 * alpha, lambda * tau);
            let got = ev.f_lambda(tau).unwrap();
            assert!((got - oracle).abs() < 1e-8, "{alpha} {lambda} {tau}: {got} vs {oracle}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn f_lambda_decreasing_in_tau_and_lambda(alpha in 0.55..0.99f64, lambda in 0.5..4.0f64, tau in 0.0..5.0f64) {
            let ev = KernelEvaluator::new(with_alpha(alpha, lambda));
            let ev2 = KernelEvaluator::new(with_alpha(alpha, lambda * 1.1));
            let f = ev.f_lambda(tau).unwrap();
            prop_assert!(f > 0.0);
            prop_assert!(ev.f_lambda(tau + 0.25).unwrap() < f);
            prop_assert!(ev2.f_lambda(tau).unwrap() < f);
        }

        #[test]
        fn g_lambda_growth_bound(alpha in 0.55..=1.0f64, b in -1.0..1.0f64, tau in 0.01..6.0f64) {
            let m = LqModel { alpha, b, ..crate::model::test_model() };
            let ev = KernelEvaluator::new(m);
            prop_assume!(!ev.is_singular(tau));
            prop_assert!(ev.g_lambda(tau).unwrap().abs() <= ev.growth_bound(tau) * (1.0 + 1e-9));
        }

        #[test]
        fn m_mu_below_one_past_rho_tilde(b in -1.0..1.0f64, alpha in 0.55..=1.0f64, extra in 0.001..5.0f64) {
            let m = LqModel { b, alpha, ..crate::model::test_model() };
            prop_assert!(m_mu_norm_bound(&m, m.rho_tilde_alpha() + extra) < 1.0);
        }
    }
}
