// SPDX-License-Identifier: Apache-2.0

//! Adaptive Gauss–Kronrod (G7/K15) quadrature.
//!
//! The integrator is vector valued: a single adaptive pass integrates `K`
//! components that share abscissae, which is how the kernel tables get
//! several exponential weights out of one set of `f_lambda` evaluations.
//! Subdivision is driven by the largest component error.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod abscissae (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<const K: usize> {
    pub value: [f64; K],
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: f64,
    /// Error level below which the rule cannot resolve this segment.
    roundoff: f64,
}

impl<const K: usize> PartialEq for Segment<K> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const K: usize> Eq for Segment<K> {}
impl<const K: usize> PartialOrd for Segment<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Segment<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn gk15<F, const K: usize>(f: &F, a: f64, b: f64) -> Segment<K>
where
    F: Fn(f64) -> [f64; K],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fv1 = [[0.0; K]; 7];
    let mut fv2 = [[0.0; K]; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        fv1[j] = f(center - dx);
        fv2[j] = f(center + dx);
    }
    let fc = f(center);

    let mut value = [0.0; K];
    let mut error = 0.0_f64;
    let mut roundoff = 0.0_f64;
    for k in 0..K {
        let mut kronrod = fc[k] * WGK[7];
        let mut gauss = fc[k] * WG[3];
        let mut res_abs = kronrod.abs();
        for j in 0..7 {
            let sum = fv1[j][k] + fv2[j][k];
            kronrod += WGK[j] * sum;
            res_abs += WGK[j] * (fv1[j][k].abs() + fv2[j][k].abs());
            if j % 2 == 1 {
                gauss += WG[j / 2] * sum;
            }
        }
        let mean = 0.5 * kronrod;
        let mut res_asc = WGK[7] * (fc[k] - mean).abs();
        for j in 0..7 {
            res_asc += WGK[j] * ((fv1[j][k] - mean).abs() + (fv2[j][k] - mean).abs());
        }
        let abs_half = half.abs();
        value[k] = kronrod * half;
        let e = rescale_error(
            (kronrod - gauss) * half,
            res_abs * abs_half,
            res_asc * abs_half,
        );
        error = error.max(e);
        roundoff = roundoff.max(50.0 * f64::EPSILON * res_abs * abs_half);
    }
    Segment {
        a,
        b,
        value,
        error,
        roundoff,
    }
}

/// Integrate the `K`-vector valued `f` over `[a, b]` until the largest
/// component error falls below `max(abs_tol, rel_tol * |I_k|)`.
pub fn integrate_vec<F, const K: usize>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature<K>>
where
    F: Fn(f64) -> [f64; K],
{
    if a == b {
        return Ok(Quadrature {
            value: [0.0; K],
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let first = gk15(&f, a, b);
    let mut evaluations = 15;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut total_roundoff = first.roundoff;
    let mut heap = BinaryHeap::new();
    heap.push(first);

    let target = |total: &[f64; K], roundoff: f64| {
        let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        abs_tol.max(rel_tol * scale).max(2.0 * roundoff)
    };

    while total_err > target(&total, total_roundoff) {
        if !total_err.is_finite() || total.iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature {
                estimate: total[0],
                error: total_err,
                tolerance: abs_tol,
            });
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature {
                estimate: total[0],
                error: total_err,
                tolerance: target(&total, total_roundoff),
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            return Err(Error::Quadrature {
                estimate: total[0],
                error: total_err,
                tolerance: target(&total, total_roundoff),
            });
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        evaluations += 30;
        for k in 0..K {
            total[k] += left.value[k] + right.value[k] - worst.value[k];
        }
        total_err += left.error + right.error - worst.error;
        total_roundoff += left.roundoff + right.roundoff - worst.roundoff;
        heap.push(left);
        heap.push(right);
        // Re-sum the error occasionally so cancellation in the running
        // total cannot stall termination.
        if heap.len() % 64 == 0 {
            total_err = heap.iter().map(|s| s.error).sum();
            total_roundoff = heap.iter().map(|s| s.roundoff).sum();
        }
    }
    if !total_err.is_finite() || total.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature {
            estimate: total[0],
            error: total_err,
            tolerance: abs_tol,
        });
    }
    // Final totals recomputed from the segment list for accuracy.
    let mut value = [0.0; K];
    let mut abs_error = 0.0;
    for s in heap.iter() {
        for k in 0..K {
            value[k] += s.value[k];
        }
        abs_error += s.error;
    }
    Ok(Quadrature {
        value,
        abs_error,
        evaluations,
    })
}

/// Scalar convenience wrapper over [`integrate_vec`].
pub fn integrate<F>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let q = integrate_vec(|x| [f(x)], a, b, abs_tol, rel_tol)?;
    Ok((q.value[0], q.abs_error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let (v, _) = integrate(|x| 3.0 * x * x + 2.0 * x - 1.0, -1.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((v - (8.0 + 1.0 + 4.0 - 1.0 - 3.0)).abs() < 1e-13, "{v}");
    }

    #[test]
    fn endpoint_singularity_converges() {
        // \int_0^1 x^{-1/2} dx = 2
        let (v, err) = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v} {err}");
    }

    #[test]
    fn vector_components_share_abscissae() {
        let q = integrate_vec(|x| [x.exp(), (-x).exp()], 0.0, 1.0, 1e-13, 0.0).unwrap();
        assert!((q.value[0] - (1f64.exp() - 1.0)).abs() < 1e-13);
        assert!((q.value[1] - (1.0 - (-1f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn divergent_integral_reports_estimate() {
        let err = integrate(|x| 1.0 / x, 0.0, 1.0, 1e-10, 0.0).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
