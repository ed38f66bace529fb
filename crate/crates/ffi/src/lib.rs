//! C ABI for loading an experiment from TOML text, choosing gains, running
//! the simulation and reading results back.
//!
//! Every fallible function returns a [`DptoStatus`]. On failure a message is
//! available from [`dpto_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dpto::cli::config::{BuildError, Experiment, ExperimentConfig, GainPlan};
use dpto::{observer, Error, Margins, ObserverGains, SimResult};

/// Status codes. Values 0 to 3 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DptoStatus {
    Ok = 0,
    ConfigError = 1,
    Infeasible = 2,
    Diverged = 3,
    InvalidArgument = 4,
    Panic = 5,
}

/// A parsed, validated experiment with its current gains.
pub struct DptoExperiment {
    experiment: Experiment,
    gains: Option<ObserverGains>,
}

/// The recorded output of one run.
pub struct DptoResult {
    result: SimResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> DptoStatus {
    match e {
        Error::Diverged { .. } => DptoStatus::Diverged,
        Error::NoSpanningTree { .. } | Error::InfeasibleTopology(_) | Error::SingularLaplacian { .. } => {
            DptoStatus::Infeasible
        }
        _ => DptoStatus::ConfigError,
    }
}

fn fail(status: DptoStatus, msg: impl Into<String>) -> DptoStatus {
    set_error(msg);
    status
}

fn core_fail(e: Error) -> DptoStatus {
    fail(status_of(&e), e.to_string())
}

fn guarded(f: impl FnOnce() -> DptoStatus) -> DptoStatus {
    clear_error();
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(DptoStatus::Panic, "internal panic"))
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dpto_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates a TOML experiment. On success `*out` owns a new handle.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpto_experiment_from_toml(toml: *const c_char, out: *mut *mut DptoExperiment) -> DptoStatus {
    guarded(|| {
        if toml.is_null() || out.is_null() {
            return fail(DptoStatus::InvalidArgument, "null argument");
        }
        *out = ptr::null_mut();
        let Ok(src) = CStr::from_ptr(toml).to_str() else {
            return fail(DptoStatus::ConfigError, "config is not valid UTF-8");
        };
        let (cfg, text) = match ExperimentConfig::parse(src, "<ffi>", &[]) {
            Ok(v) => v,
            Err(e) => return fail(DptoStatus::ConfigError, e.to_string()),
        };
        let experiment = match cfg.build(&text, "<ffi>") {
            Ok(x) => x,
            Err(BuildError::Config(e)) => return fail(DptoStatus::ConfigError, e.to_string()),
            Err(BuildError::Infeasible(e)) => return core_fail(e),
        };
        let gains = match experiment.gains {
            GainPlan::Explicit(g) => Some(g),
            GainPlan::Synthesize(m) => {
                let analyses = match experiment.topologies.analyses() {
                    Ok(a) => a,
                    Err(e) => return core_fail(e),
                };
                match observer::synthesize_gains(&analyses, experiment.leader.input_bound(), m) {
                    Ok(g) => Some(g),
                    Err(e) => return core_fail(e),
                }
            }
        };
        *out = Box::into_raw(Box::new(DptoExperiment { experiment, gains }));
        DptoStatus::Ok
    })
}

/// # Safety
/// `exp` must be NULL or a handle from [`dpto_experiment_from_toml`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dpto_experiment_free(exp: *mut DptoExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Lower bound on β over every topology of the experiment.
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpto_experiment_beta_bound(exp: *const DptoExperiment, out: *mut f64) -> DptoStatus {
    guarded(|| {
        let (Some(exp), false) = (exp.as_ref(), out.is_null()) else {
            return fail(DptoStatus::InvalidArgument, "null argument");
        };
        match exp.experiment.topologies.analyses().and_then(|a| observer::beta_lower_bound(&a)) {
            Ok(b) => {
                *out = b;
                DptoStatus::Ok
            }
            Err(e) => core_fail(e),
        }
    })
}

/// Replaces the experiment's gains with synthesized ones and writes them to
/// `gains_out[0..3]` as (α, β, σ) when `gains_out` is not NULL.
///
/// # Safety
/// `exp` must be a live handle; `gains_out` NULL or valid for three doubles.
#[no_mangle]
pub unsafe extern "C" fn dpto_experiment_synthesize(
    exp: *mut DptoExperiment,
    alpha: f64,
    beta_factor: f64,
    sigma_factor: f64,
    gains_out: *mut f64,
) -> DptoStatus {
    guarded(|| {
        let Some(exp) = exp.as_mut() else {
            return fail(DptoStatus::InvalidArgument, "null experiment");
        };
        let margins = Margins {
            alpha,
            beta_factor,
            sigma_factor,
        };
        let g = match exp
            .experiment
            .topologies
            .analyses()
            .and_then(|a| observer::synthesize_gains(&a, exp.experiment.leader.input_bound(), margins))
        {
            Ok(g) => g,
            Err(e) => return core_fail(e),
        };
        exp.gains = Some(g);
        if !gains_out.is_null() {
            *gains_out = g.alpha;
            *gains_out.add(1) = g.beta;
            *gains_out.add(2) = g.sigma;
        }
        DptoStatus::Ok
    })
}

/// Sets explicit gains.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpto_experiment_set_gains(exp: *mut DptoExperiment, alpha: f64, beta: f64, sigma: f64) -> DptoStatus {
    guarded(|| {
        let Some(exp) = exp.as_mut() else {
            return fail(DptoStatus::InvalidArgument, "null experiment");
        };
        match ObserverGains::user(alpha, beta, sigma) {
            Ok(g) => {
                exp.gains = Some(g);
                DptoStatus::Ok
            }
            Err(e) => core_fail(e),
        }
    })
}

/// Runs the simulation. On success `*out` owns a new result handle.
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpto_run(exp: *const DptoExperiment, out: *mut *mut DptoResult) -> DptoStatus {
    guarded(|| {
        let (Some(exp), false) = (exp.as_ref(), out.is_null()) else {
            return fail(DptoStatus::InvalidArgument, "null argument");
        };
        *out = ptr::null_mut();
        let Some(gains) = exp.gains else {
            return fail(DptoStatus::ConfigError, "no gains set");
        };
        let x = &exp.experiment;
        match dpto::run(&x.topologies, &x.leader, &gains, &x.schedule, &x.initial_estimates, &x.sim) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(DptoResult { result }));
                DptoStatus::Ok
            }
            Err(e) => core_fail(e),
        }
    })
}

/// # Safety
/// `res` must be NULL or a handle from [`dpto_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dpto_result_free(res: *mut DptoResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Number of recorded samples, 0 for NULL.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpto_result_sample_count(res: *const DptoResult) -> usize {
    res.as_ref().map_or(0, |r| r.result.times.len())
}

/// Leader order `n`, 0 for NULL.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpto_result_order(res: *const DptoResult) -> usize {
    res.as_ref().map_or(0, |r| r.result.order())
}

/// Follower count `N`, 0 for NULL.
///
/// # Safety
/// `res` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpto_result_follower_count(res: *const DptoResult) -> usize {
    res.as_ref()
        .and_then(|r| r.result.estimate_errors.first())
        .map_or(0, |m| m.rows())
}

unsafe fn read_value(res: *const DptoResult, out: *mut f64, f: impl FnOnce(&SimResult) -> Option<f64>) -> DptoStatus {
    guarded(|| {
        let (Some(r), false) = (res.as_ref(), out.is_null()) else {
            return fail(DptoStatus::InvalidArgument, "null argument");
        };
        match f(&r.result) {
            Some(v) => {
                *out = v;
                DptoStatus::Ok
            }
            None => fail(DptoStatus::InvalidArgument, "index out of range"),
        }
    })
}

/// Time of sample `sample` (0-based).
///
/// # Safety
/// `res` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpto_result_time(res: *const DptoResult, sample: usize, out: *mut f64) -> DptoStatus {
    read_value(res, out, |r| r.times.get(sample).copied())
}

/// Global error of `follower` on `state` at `sample`. Follower and state are
/// 1-based, the sample index is 0-based.
///
/// # Safety
/// `res` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpto_result_error(
    res: *const DptoResult,
    sample: usize,
    follower: usize,
    state: usize,
    out: *mut f64,
) -> DptoStatus {
    read_value(res, out, |r| {
        let m = r.estimate_errors.get(sample)?;
        (follower >= 1 && follower <= m.rows() && state >= 1 && state <= m.cols()).then(|| m[(follower - 1, state - 1)])
    })
}

/// Stage-`stage` Lyapunov value at `sample`.
///
/// # Safety
/// `res` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpto_result_lyapunov(res: *const DptoResult, sample: usize, stage: usize, out: *mut f64) -> DptoStatus {
    read_value(res, out, |r| {
        let v = r.lyapunov.get(sample)?;
        stage.checked_sub(1).and_then(|k| v.get(k).copied())
    })
}

/// Convergence time of `state` (1-based), or NaN if the tolerance was never
/// held to the end of the run.
///
/// # Safety
/// `res` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dpto_result_convergence_time(res: *const DptoResult, state: usize, out: *mut f64) -> DptoStatus {
    read_value(res, out, |r| {
        let c = state.checked_sub(1).and_then(|k| r.convergence_times.get(k))?;
        Some(c.unwrap_or(f64::NAN))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_handles_are_rejected() {
        let mut v = 0.0;
        unsafe {
            assert_eq!(dpto_experiment_beta_bound(ptr::null(), &mut v), DptoStatus::InvalidArgument);
            assert!(!dpto_last_error().is_null());
            assert_eq!(dpto_result_sample_count(ptr::null()), 0);
            dpto_experiment_free(ptr::null_mut());
            dpto_result_free(ptr::null_mut());
        }
    }

    #[test]
    fn status_codes_match_exit_codes() {
        assert_eq!(DptoStatus::ConfigError as i32, 1);
        assert_eq!(DptoStatus::Infeasible as i32, 2);
        assert_eq!(DptoStatus::Diverged as i32, 3);
        assert_eq!(status_of(&Error::Diverged { time: 0.1, magnitude: 1e10 }), DptoStatus::Diverged);
    }
}
