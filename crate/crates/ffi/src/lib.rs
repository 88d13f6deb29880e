// SPDX-License-Identifier: Apache-2.0

//! C ABI over `frac_lqr`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns an [`FlqStatus`]
//! and records a message readable through [`flq_last_error_message`] on the
//! same thread. Panics are caught at the boundary and reported as
//! [`FlqStatus::Panic`].

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use frac_lqr::synthesis::{cost_estimate, synthesize, ControlSource, FeedbackLaw};
use frac_lqr::{Error, LqModel, TimeGrid};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlqStatus {
    Ok = 0,
    InvalidArgument = 1,
    NotAdmissible = 2,
    ContractionFailure = 3,
    NumericalFailure = 4,
    NullPointer = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlqControl {
    Zero = 0,
    Optimal = 1,
}

/// Problem parameters, field for field.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FlqParams {
    pub x0: f64,
    pub b: f64,
    pub c: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub delta: f64,
    pub lambda: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FlqConstants {
    pub rho_alpha: f64,
    pub rho_tilde_alpha: f64,
    pub mu: f64,
    pub k_lambda: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FlqCost {
    pub mean: f64,
    pub std_error: f64,
    pub horizon_truncation_bound: f64,
}

/// Validated model.
pub struct FlqModel {
    model: LqModel,
}

/// Synthesized feedback law on a fixed grid.
pub struct FlqLaw {
    law: FeedbackLaw,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

type Outcome = std::result::Result<(), (FlqStatus, String)>;

fn status_of(e: &Error) -> FlqStatus {
    match e {
        Error::NotAdmissible { .. } => FlqStatus::NotAdmissible,
        Error::Contraction { .. } => FlqStatus::ContractionFailure,
        Error::InvalidParameter(_)
        | Error::InvalidMu { .. }
        | Error::InvalidGrid(_)
        | Error::DelayOffGrid { .. }
        | Error::GridMismatch(_)
        | Error::Precondition(_)
        | Error::Config(_) => FlqStatus::InvalidArgument,
        _ => FlqStatus::NumericalFailure,
    }
}

fn fail(e: Error) -> (FlqStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FlqStatus, String) {
    (FlqStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Outcome) -> FlqStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (FlqStatus::Ok, String::new()),
        Ok(Err(e)) => e,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            (FlqStatus::Panic, msg)
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

/// `NaN` selects the default.
fn optional(x: f64) -> Option<f64> {
    if x.is_nan() {
        None
    } else {
        Some(x)
    }
}

/// Validate `params` and allocate a model handle into `*out`.
///
/// # Safety
/// `params` must point to a valid `FlqParams`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flq_model_new(params: *const FlqParams, out: *mut *mut FlqModel) -> FlqStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = LqModel {
            x0: p.x0,
            b: p.b,
            c: p.c,
            sigma: p.sigma,
            gamma: p.gamma,
            alpha: p.alpha,
            delta: p.delta,
            lambda: p.lambda,
        };
        model.validate().map_err(fail)?;
        *out = Box::into_raw(Box::new(FlqModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`flq_model_new`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn flq_model_free(model: *mut FlqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Criterion constants and `K_lambda`. `mu = NaN` picks the default weight.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flq_model_constants(model: *const FlqModel, mu: f64, out: *mut FlqConstants) -> FlqStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let a = m.admissibility(optional(mu)).map_err(fail)?;
        *out = FlqConstants {
            rho_alpha: a.rho_alpha,
            rho_tilde_alpha: a.rho_tilde_alpha,
            mu: a.mu,
            k_lambda: m.k_constant(),
        };
        Ok(())
    })
}

/// Synthesize on `n` cells. `horizon = NaN` picks the default truncation,
/// `mu = NaN` the default weight.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flq_synthesize(
    model: *const FlqModel,
    horizon: f64,
    n: usize,
    mu: f64,
    out: *mut *mut FlqLaw,
) -> FlqStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        if out.is_null() {
            return Err(null("out"));
        }
        let mu = optional(mu);
        let grid = match optional(horizon) {
            Some(t) => TimeGrid::new(t, n),
            None => m
                .admissibility(mu)
                .and_then(|a| TimeGrid::default_for(m, a.mu, n)),
        }
        .map_err(fail)?;
        let law = synthesize(m, &grid, mu).map_err(fail)?;
        *out = Box::into_raw(Box::new(FlqLaw { law }));
        Ok(())
    })
}

/// # Safety
/// `law` must come from [`flq_synthesize`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn flq_law_free(law: *mut FlqLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Number of nodes (`n + 1`); 0 for a null handle.
///
/// # Safety
/// `law` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flq_law_len(law: *const FlqLaw) -> usize {
    law.as_ref().map_or(0, |l| l.law.grid.n() + 1)
}

unsafe fn copy_nodes(law: *const FlqLaw, buf: *mut f64, len: usize, pick: fn(&FeedbackLaw) -> &[f64]) -> FlqStatus {
    guard(|| {
        let l = &law.as_ref().ok_or_else(|| null("law"))?.law;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let src = pick(l);
        if len < src.len() {
            return Err((
                FlqStatus::InvalidArgument,
                format!("buffer holds {len} values, need {}", src.len()),
            ));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
        Ok(())
    })
}

/// Copy the `n + 1` nodal values of the deterministic part into `buf`.
///
/// # Safety
/// `law` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn flq_law_phi_hat(law: *const FlqLaw, buf: *mut f64, len: usize) -> FlqStatus {
    copy_nodes(law, buf, len, |l| &l.phi_hat)
}

/// Copy the `n + 1` nodal values of the noise kernel into `buf`.
///
/// # Safety
/// `law` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn flq_law_psi_hat(law: *const FlqLaw, buf: *mut f64, len: usize) -> FlqStatus {
    copy_nodes(law, buf, len, |l| &l.psi_hat)
}

/// Feedback gain on the delayed state, `-b / c`.
///
/// # Safety
/// `law` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flq_law_gain(law: *const FlqLaw, out: *mut f64) -> FlqStatus {
    guard(|| {
        let l = &law.as_ref().ok_or_else(|| null("law"))?.law;
        *out.as_mut().ok_or_else(|| null("out"))? = l.gain;
        Ok(())
    })
}

/// Horizon of the law's grid.
///
/// # Safety
/// `law` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flq_law_horizon(law: *const FlqLaw, out: *mut f64) -> FlqStatus {
    guard(|| {
        let l = &law.as_ref().ok_or_else(|| null("law"))?.law;
        *out.as_mut().ok_or_else(|| null("out"))? = l.grid.horizon();
        Ok(())
    })
}

/// Monte Carlo cost on the law's grid with seeds `base_seed + i`.
///
/// # Safety
/// `law` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flq_cost_estimate(
    law: *const FlqLaw,
    control: FlqControl,
    n_paths: usize,
    base_seed: u64,
    out: *mut FlqCost,
) -> FlqStatus {
    guard(|| {
        let l = &law.as_ref().ok_or_else(|| null("law"))?.law;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let source = match control {
            FlqControl::Zero => ControlSource::Zero,
            FlqControl::Optimal => ControlSource::Optimal(l),
        };
        let est = cost_estimate(&l.model, &source, &l.grid, n_paths, base_seed).map_err(fail)?;
        *out = FlqCost {
            mean: est.mean,
            std_error: est.std_error,
            horizon_truncation_bound: est.horizon_truncation_bound,
        };
        Ok(())
    })
}

/// Copy the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes. Returns the full length including the NUL, so
/// a call with `len = 0` sizes the buffer.
///
/// # Safety
/// `buf` must be null or hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn flq_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        bytes.len() + 1
    })
}
