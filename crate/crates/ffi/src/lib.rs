//! C ABI for stochmatch.
//!
//! Objects cross the boundary as opaque handles created by `*_new` /
//! `*_from_json` and released by the matching `*_free`. Every fallible call
//! returns an [`SmStatus`]; on failure a description is available from
//! [`sm_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stochmatch::engines::Engine;
use stochmatch::instance::{Graph, Instance, KernelInstance};
use stochmatch::lp::{solve_instance, LP_TOL};
use stochmatch::montecarlo::{estimate, ratio_report, EstimateConfig};
use stochmatch::ratiocalc::check_all;
use stochmatch::{Error, PiecewiseConstantF, TOL};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Io = 4,
    Parse = 5,
    NotKernel = 6,
    Internal = 7,
}

/// Activation function handle.
pub struct SmActivation {
    inner: PiecewiseConstantF,
}

/// Kernel instance handle.
pub struct SmKernel {
    inner: KernelInstance,
}

/// Analytic bounds of an activation function at `y* = 1 - ln 2`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmRatioReport {
    pub r1: f64,
    pub r2: f64,
    pub min: f64,
    pub cons1: f64,
    pub cons2: f64,
    /// `F(1)`
    pub total: f64,
    pub t_star: f64,
    /// Every validity check passed, so `min` is a certified ratio.
    pub certified: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> SmStatus {
    match err {
        Error::NotKernel(_) => SmStatus::NotKernel,
        Error::Io { .. } => SmStatus::Io,
        Error::Parse { .. } => SmStatus::Parse,
        Error::InvalidConfig(_) | Error::ZeroTrials | Error::InvalidActivation(_) => SmStatus::InvalidArgument,
        Error::Lp(_) => SmStatus::Internal,
        _ => SmStatus::Validation,
    }
}

/// Runs `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), (SmStatus, String)>) -> SmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SmStatus::Internal
        }
    }
}

fn fail(e: Error) -> (SmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SmStatus, String) {
    (SmStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn json_arg<'a>(json: *const c_char) -> Result<&'a str, (SmStatus, String)> {
    if json.is_null() {
        return Err(null("json"));
    }
    CStr::from_ptr(json)
        .to_str()
        .map_err(|_| (SmStatus::InvalidArgument, "json is not UTF-8".to_owned()))
}

fn parse_instance(text: &str) -> Result<Instance, (SmStatus, String)> {
    serde_json::from_str(text).map_err(|e| (SmStatus::Parse, e.to_string()))
}

/// Message describing the last failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds an activation function from `m` values `f_1 ≤ … ≤ f_m` in `[0, 2]`.
///
/// # Safety
/// `values` must point to `m` readable doubles and `out` to a writable
/// handle slot.
#[no_mangle]
pub unsafe extern "C" fn sm_activation_new(values: *const f64, m: usize, out: *mut *mut SmActivation) -> SmStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let vals = std::slice::from_raw_parts(values, m).to_vec();
        let inner = PiecewiseConstantF::new(vals).map_err(fail)?;
        *out = Box::into_raw(Box::new(SmActivation { inner }));
        Ok(())
    })
}

/// # Safety
/// `f` must be NULL or a handle from [`sm_activation_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_activation_free(f: *mut SmActivation) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Evaluates r1, r2, cons1, cons2 and the validity flags of `f`.
///
/// # Safety
/// `f` must be a live activation handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_ratio_eval(f: *const SmActivation, out: *mut SmRatioReport) -> SmStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("f"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = check_all(&f.inner);
        *out = SmRatioReport {
            r1: r.r1,
            r2: r.r2,
            min: r.min,
            cons1: r.cons1,
            cons2: r.cons2,
            total: r.total,
            t_star: r.t_star,
            certified: r.certified.is_some(),
        };
        Ok(())
    })
}

/// Parses an instance document with an `x` section and classifies it as a
/// kernel instance.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn sm_kernel_from_json(json: *const c_char, out: *mut *mut SmKernel) -> SmStatus {
    guard(|| {
        let text = json_arg(json)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inst = parse_instance(text)?;
        let inner = KernelInstance::from_instance(&inst, TOL).map_err(fail)?;
        *out = Box::into_raw(Box::new(SmKernel { inner }));
        Ok(())
    })
}

/// # Safety
/// `k` must be NULL or a handle from [`sm_kernel_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_kernel_free(k: *mut SmKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Number of edges of the kernel instance, 0 for NULL.
///
/// # Safety
/// `k` must be NULL or a live kernel handle.
#[no_mangle]
pub unsafe extern "C" fn sm_kernel_num_edges(k: *const SmKernel) -> usize {
    k.as_ref().map_or(0, |k| k.inner.graph().num_edges())
}

/// Solves the LP of an instance document. The objective goes to
/// `out_objective`; when `out_x` is non-NULL the optimal `x` is written in
/// edge order (online types in input order, neighbours in list order) and
/// `x_capacity` must be at least the number of edges.
///
/// # Safety
/// `json` must be NUL-terminated, `out_objective` writable and `out_x`
/// NULL or valid for `x_capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn sm_lp_solve(
    json: *const c_char,
    out_objective: *mut f64,
    out_x: *mut f64,
    x_capacity: usize,
) -> SmStatus {
    guard(|| {
        let text = json_arg(json)?;
        if out_objective.is_null() {
            return Err(null("out_objective"));
        }
        let inst = parse_instance(text)?;
        let graph = Graph::build(&inst).map_err(fail)?;
        let sol = solve_instance(&graph, LP_TOL).map_err(fail)?;
        if !out_x.is_null() {
            let x = sol.x.values();
            if x_capacity < x.len() {
                return Err((
                    SmStatus::InvalidArgument,
                    format!("x_capacity {x_capacity} < {} edges", x.len()),
                ));
            }
            std::slice::from_raw_parts_mut(out_x, x.len()).copy_from_slice(x);
        }
        *out_objective = sol.objective;
        Ok(())
    })
}

/// Monte Carlo estimate of the smallest `Pr[M_ij = 1] / x_ij` over edges.
/// With `f` NULL the engine is Suggested Matching, otherwise ESM with `f`.
///
/// # Safety
/// `k` must be a live kernel handle, `f` NULL or a live activation handle,
/// and `out_ratio`, `out_se` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_estimate_min_ratio(
    k: *const SmKernel,
    f: *const SmActivation,
    trials: u64,
    seed: u64,
    out_ratio: *mut f64,
    out_se: *mut f64,
) -> SmStatus {
    guard(|| {
        let k = k.as_ref().ok_or_else(|| null("k"))?;
        if out_ratio.is_null() || out_se.is_null() {
            return Err(null("out_ratio/out_se"));
        }
        let kernel = k.inner.clone();
        let engine = match f.as_ref() {
            Some(f) => Engine::esm(kernel, f.inner.clone()),
            None => Engine::suggested(kernel.graph().clone(), kernel.solution().clone()),
        };
        let report = estimate(&engine, &EstimateConfig::new(trials, seed)).map_err(fail)?;
        let min = ratio_report(&report)
            .min
            .ok_or_else(|| (SmStatus::Validation, "no edge with x > 0".to_owned()))?;
        *out_ratio = min.ratio;
        *out_se = min.se;
        Ok(())
    })
}
