// SPDX-License-Identifier: Apache-2.0

//! Problem parameters and the criterion constants that gate synthesis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar delayed fractional LQ problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqModel {
    pub x0: f64,
    /// Gain on the delayed state.
    pub b: f64,
    /// Control gain; must be nonzero.
    pub c: f64,
    pub sigma: f64,
    /// Inverse control weight.
    pub gamma: f64,
    /// Caputo order in (1/2, 1].
    pub alpha: f64,
    pub delta: f64,
    /// Discount rate.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityConstants {
    pub rho_alpha: f64,
    pub rho_tilde_alpha: f64,
    pub mu: f64,
}

/// Lipschitz constants of a delay equation's drift and diffusion in the
/// current (`*_x1`) and delayed (`*_x2`) state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LipschitzConstants {
    pub drift_x1: f64,
    pub drift_x2: f64,
    pub diffusion_x1: f64,
    pub diffusion_x2: f64,
}

/// Stochastic delayed configuration shared by the unit tests.
#[cfg(test)]
pub(crate) fn test_model() -> LqModel {
    LqModel {
        x0: 1.0,
        b: 0.1,
        c: 1.0,
        sigma: 0.5,
        gamma: 1.0,
        alpha: 0.75,
        delta: 0.5,
        lambda: 3.0,
    }
}

impl LqModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        for (name, v) in [
            ("x0", self.x0),
            ("b", self.b),
            ("c", self.c),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("delta", self.delta),
            ("lambda", self.lambda),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.c == 0.0 {
            return bad("c must be nonzero");
        }
        if self.sigma < 0.0 {
            return bad("sigma must be nonnegative");
        }
        if self.gamma <= 0.0 {
            return bad("gamma must be positive");
        }
        if self.alpha <= 0.5 {
            return bad("alpha must exceed 1/2");
        }
        if self.alpha > 1.0 {
            return bad("alpha must not exceed 1");
        }
        if self.delta < 0.0 {
            return bad("delta must be nonnegative");
        }
        if self.lambda <= 0.0 {
            return bad("lambda must be positive");
        }
        Ok(())
    }

    pub fn rho_alpha(&self) -> f64 {
        rho_alpha(self.b, self.delta, self.alpha)
    }

    /// Root of `{(c^2 gamma + b^2 e^{-2 rho delta})(2 rho)^{-alpha} + |b|(1 + e^{-rho delta})} rho^{-alpha} = 1/2`.
    pub fn rho_tilde_alpha(&self) -> f64 {
        let cg = self.c * self.c * self.gamma;
        let b = self.b;
        let (a, d) = (self.alpha, self.delta);
        monotone_root(
            |r| {
                ((cg + b * b * (-2.0 * r * d).exp()) * (2.0 * r).powf(-a)
                    + b.abs() * (1.0 + (-r * d).exp()))
                    * r.powf(-a)
            },
            0.5,
        )
    }

    /// `c^2 gamma + b^2 e^{-lambda delta}`, the weight in front of `f_lambda`.
    pub fn coupling(&self) -> f64 {
        self.c * self.c * self.gamma + self.b * self.b * (-self.lambda * self.delta).exp()
    }

    pub fn k_constant(&self) -> f64 {
        (self.coupling() * self.lambda.powf(-self.alpha) - self.b) / self.c
    }

    /// Feedback coefficient on the delayed state.
    pub fn gain(&self) -> f64 {
        -self.b / self.c
    }

    /// Check `lambda > 2 rho_tilde` and resolve `mu` (default: midpoint of
    /// `(rho_tilde, lambda/2]`).
    pub fn admissibility(&self, mu: Option<f64>) -> Result<AdmissibilityConstants> {
        self.validate()?;
        let rho_tilde_alpha = self.rho_tilde_alpha();
        let upper = self.lambda / 2.0;
        if self.lambda <= 2.0 * rho_tilde_alpha {
            return Err(Error::NotAdmissible {
                lambda: self.lambda,
                bound: 2.0 * rho_tilde_alpha,
            });
        }
        let mu = match mu {
            None => 0.5 * (rho_tilde_alpha + upper),
            Some(m) => {
                if !(m > rho_tilde_alpha && m <= upper) {
                    return Err(Error::InvalidMu {
                        mu: m,
                        lower: rho_tilde_alpha,
                        upper,
                    });
                }
                m
            }
        };
        Ok(AdmissibilityConstants {
            rho_alpha: self.rho_alpha(),
            rho_tilde_alpha,
            mu,
        })
    }
}

/// Root of `|b|(1 + e^{-rho delta}) rho^{-alpha} = 1`; zero when `b = 0`.
pub fn rho_alpha(b: f64, delta: f64, alpha: f64) -> f64 {
    fractional_criterion(
        &LipschitzConstants {
            drift_x2: b.abs(),
            ..Default::default()
        },
        alpha,
        delta,
    )
}

/// Smallest `rho` with
/// `(1 + e^{-rho delta}) {(L_b1 + L_b2) rho^{-alpha} + (L_s1 + L_s2) sqrt(Gamma(2 alpha - 1)) / Gamma(alpha) (2 rho)^{-(alpha - 1/2)}} <= 1`.
pub fn fractional_criterion(lip: &LipschitzConstants, alpha: f64, delta: f64) -> f64 {
    let lb = lip.drift_x1 + lip.drift_x2;
    let ls = lip.diffusion_x1 + lip.diffusion_x2;
    if lb == 0.0 && ls == 0.0 {
        return 0.0;
    }
    let noise = ls * crate::kernels::gamma(2.0 * alpha - 1.0).sqrt() / crate::kernels::gamma(alpha);
    monotone_root(
        |r| {
            (1.0 + (-r * delta).exp())
                * (lb * r.powf(-alpha) + noise * (2.0 * r).powf(0.5 - alpha))
        },
        1.0,
    )
}

/// Bisection for `f(rho) = target` with `f` strictly decreasing from +inf to 0 on `(0, inf)`.
pub(crate) fn monotone_root(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let mut lo = 1e-12;
    if f(lo) <= target {
        return lo;
    }
    let mut hi = 1.0;
    while f(hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    // Width is measured relative to the root so tiny roots keep full precision.
    while hi - lo > 1e-14 * lo.max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> LqModel {
        test_model()
    }

    #[test]
    fn validation_names_first_violation() {
        let msg = |m: LqModel| m.validate().unwrap_err().to_string();
        assert_eq!(msg(LqModel { c: 0.0, ..base() }), "c must be nonzero");
        assert_eq!(msg(LqModel { alpha: 0.5, ..base() }), "alpha must exceed 1/2");
        assert_eq!(msg(LqModel { alpha: 1.2, ..base() }), "alpha must not exceed 1");
        assert_eq!(msg(LqModel { gamma: 0.0, ..base() }), "gamma must be positive");
        assert_eq!(msg(LqModel { delta: -1.0, ..base() }), "delta must be nonnegative");
        assert_eq!(msg(LqModel { lambda: 0.0, ..base() }), "lambda must be positive");
        assert_eq!(msg(LqModel { sigma: -0.1, ..base() }), "sigma must be nonnegative");
        assert!(base().validate().is_ok());
    }

    #[test]
    fn rho_alpha_closed_forms() {
        assert_eq!(rho_alpha(0.0, 0.7, 0.8), 0.0);
        // delta = 0 gives rho = (2|b|)^{1/alpha}
        assert!((rho_alpha(0.5, 0.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((rho_alpha(0.5, 0.0, 0.75) - 1.0).abs() < 1e-12);
        let r = rho_alpha(-0.3, 0.0, 0.6);
        assert!((r - 0.6f64.powf(1.0 / 0.6)).abs() < 1e-12);
    }

    #[test]
    fn rho_tilde_closed_forms() {
        let m = LqModel {
            b: 0.0,
            c: 1.0,
            gamma: 1.0,
            alpha: 1.0,
            delta: 3.0,
            ..base()
        };
        assert!((m.rho_tilde_alpha() - 1.0).abs() < 1e-12);
        let m2 = LqModel { c: 2.0, ..m };
        assert!((m2.rho_tilde_alpha() - 2.0).abs() < 1e-12);
        let m3 = LqModel {
            b: 0.5,
            delta: 0.0,
            ..m
        };
        let r = m3.rho_tilde_alpha();
        // (1.25 / (2r) + 1) / r = 1/2  =>  r^2 - 2r - 1.25 = 0
        assert!((r - (1.0 + 2.25f64.sqrt())).abs() < 1e-12);
        assert!(r > m3.rho_alpha());
    }

    #[test]
    fn k_constant_examples() {
        let m = LqModel {
            b: 0.0,
            c: 1.0,
            gamma: 1.0,
            lambda: 1.0,
            alpha: 1.0,
            ..base()
        };
        assert_eq!(m.k_constant(), 1.0);
        let m = LqModel {
            c: 2.0,
            lambda: 4.0,
            ..m
        };
        assert!((m.k_constant() - 0.5).abs() < 1e-15);
        let k = LqModel { lambda: 2.0, ..base() }.k_constant();
        let oracle = (1.0 + 0.01 * (-1.0f64).exp()) * 2f64.powf(-0.75) - 0.1;
        assert!((k - oracle).abs() < 1e-15);
        assert!((k - 0.49679).abs() < 1e-5);
    }

    #[test]
    fn admissibility_and_mu() {
        let m = base();
        let a = m.admissibility(None).unwrap();
        assert!(a.rho_tilde_alpha > a.rho_alpha);
        assert!(a.mu > a.rho_tilde_alpha && a.mu <= m.lambda / 2.0);
        assert!(m.admissibility(Some(m.lambda)).is_err());
        assert!(m.admissibility(Some(m.lambda / 2.0)).is_ok());
        // 2 rho_tilde is about 2.70 here.
        let tight = LqModel { lambda: 2.0, ..m };
        assert!(matches!(
            tight.admissibility(None),
            Err(Error::NotAdmissible { .. })
        ));
    }

    #[test]
    fn general_criterion_with_noise_exceeds_drift_only() {
        let drift_only = LipschitzConstants {
            drift_x2: 0.4,
            ..Default::default()
        };
        let noisy = LipschitzConstants {
            diffusion_x1: 0.2,
            ..drift_only
        };
        let a = fractional_criterion(&drift_only, 0.8, 0.5);
        let b = fractional_criterion(&noisy, 0.8, 0.5);
        assert!(b > a);
        assert_eq!(a, rho_alpha(0.4, 0.5, 0.8));
    }

    fn model_strategy() -> impl Strategy<Value = LqModel> {
        (
            -2.0..2.0f64,
            prop_oneof![-3.0..-0.1f64, 0.1..3.0f64],
            0.1..4.0f64,
            0.51..=1.0f64,
            0.0..3.0f64,
        )
            .prop_map(|(b, c, gamma, alpha, delta)| LqModel {
                x0: 1.0,
                b,
                c,
                sigma: 0.3,
                gamma,
                alpha,
                delta,
                lambda: 1.0,
            })
    }

    proptest! {
        #[test]
        fn rho_alpha_solves_its_equation(b in 0.01..5.0f64, delta in 0.0..4.0f64, alpha in 0.51..=1.0f64) {
            let r = rho_alpha(b, delta, alpha);
            let lhs = b * (1.0 + (-r * delta).exp()) * r.powf(-alpha);
            prop_assert!((lhs - 1.0).abs() < 1e-12, "lhs = {lhs}");
        }

        #[test]
        fn rho_alpha_monotone(b in 0.01..3.0f64, db in 0.0..1.0f64, delta in 0.0..3.0f64, dd in 0.0..1.0f64, alpha in 0.51..=1.0f64) {
            prop_assert!(rho_alpha(b + db, delta, alpha) >= rho_alpha(b, delta, alpha));
            prop_assert!(rho_alpha(b, delta + dd, alpha) <= rho_alpha(b, delta, alpha));
        }

        #[test]
        fn rho_tilde_solves_and_dominates(m in model_strategy()) {
            let r = m.rho_tilde_alpha();
            let cg = m.c * m.c * m.gamma;
            let lhs = ((cg + m.b * m.b * (-2.0 * r * m.delta).exp()) * (2.0 * r).powf(-m.alpha)
                + m.b.abs() * (1.0 + (-r * m.delta).exp())) * r.powf(-m.alpha);
            prop_assert!((lhs - 0.5).abs() < 1e-12, "lhs = {lhs}");
            prop_assert!(r > m.rho_alpha());
        }

        #[test]
        fn k_constant_scales_with_inverse_c(m in model_strategy(), s in 0.2..5.0f64) {
            // Scaling c by s and gamma by 1/s^2 keeps the numerator fixed.
            let scaled = LqModel { c: m.c * s, gamma: m.gamma / (s * s), ..m };
            prop_assert!((scaled.k_constant() * s - m.k_constant()).abs() < 1e-12 * (1.0 + m.k_constant().abs()));
        }
    }
}
