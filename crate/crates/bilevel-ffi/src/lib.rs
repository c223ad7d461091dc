//! C ABI for the bilevel optimization library.
//!
//! Problems and finished runs are exposed as opaque handles; every fallible
//! call returns a status code and records a human-readable message
//! retrievable with `bilevel_last_error_message`. Missing optional values
//! (relative errors without a known optimum) are reported as NaN.
//!
//! The generated header lands in `include/bilevel.h` at build time.
//!
//! Pointer contract for every function in this module: handle pointers must
//! be NULL or originate from the corresponding constructor and not yet be
//! freed; array pointers must be NULL or valid for the stated length; string
//! pointers must be NULL or NUL-terminated. NULL where a value is required
//! yields `NullArgument` rather than undefined behavior.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};

use bilevel::dynamics::{pgd_forward, StepSchedule};
use bilevel::hypergrad::{unrolled_reverse, HvpPolicy};
use bilevel::problems::{
    convex_quadratic, nonconvex_sine, synthetic_hyperclean, BilevelProblem, HypercleanConfig,
};
use bilevel::residual::residual;
use bilevel::solvers::{run_variant, MethodKind, OuterOptimizer, RunState, SolverConfig};
use bilevel::vector::Vector;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BilevelStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Unsupported = 3,
    NumericalFailure = 4,
    IllConditioned = 5,
    BufferTooSmall = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg.into());
}

fn status_from(err: &bilevel::Error) -> BilevelStatus {
    use bilevel::Error::*;
    set_error(err.to_string());
    match err {
        DimensionMismatch { .. } | InvalidArgument(_) | Config(_) => BilevelStatus::InvalidArgument,
        NumericalFailure { .. } => BilevelStatus::NumericalFailure,
        OuterStepFailure { source, .. } => status_from(source),
        MissingCurvatureOracle | UnsupportedProblem(_) => BilevelStatus::Unsupported,
        IllConditioned { .. } => BilevelStatus::IllConditioned,
        Io(_) => BilevelStatus::InvalidArgument,
    }
}

/// Opaque problem handle.
pub struct BilevelProblemHandle {
    problem: Box<dyn BilevelProblem>,
}

/// Opaque handle over a finished run.
pub struct BilevelRunHandle {
    state: RunState,
}

/// Copy the last error message (NUL-terminated, truncated to `len`) into
/// `buf`; returns the full message length in bytes, excluding the NUL.
#[no_mangle]
pub unsafe extern "C" fn bilevel_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let copy = bytes.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), copy);
                *buf.add(copy) = 0;
            }
        }
        bytes.len()
    })
}

fn emit_problem(
    out: *mut *mut BilevelProblemHandle,
    problem: Box<dyn BilevelProblem>,
) -> BilevelStatus {
    if out.is_null() {
        set_error("output pointer is null");
        return BilevelStatus::NullArgument;
    }
    let handle = Box::new(BilevelProblemHandle { problem });
    unsafe { *out = Box::into_raw(handle) };
    BilevelStatus::Ok
}

/// One-dimensional non-convex test problem with a known unique solution.
#[no_mangle]
pub unsafe extern "C" fn bilevel_problem_sine(out: *mut *mut BilevelProblemHandle) -> BilevelStatus {
    emit_problem(out, Box::new(nonconvex_sine()))
}

/// Convex test problem with an n-dimensional upper level and a 2n-dimensional
/// lower level whose solution set is a flat affine subspace.
#[no_mangle]
pub unsafe extern "C" fn bilevel_problem_quadratic(
    n: usize,
    out: *mut *mut BilevelProblemHandle,
) -> BilevelStatus {
    match convex_quadratic(n) {
        Ok(p) => emit_problem(out, Box::new(p)),
        Err(e) => status_from(&e),
    }
}

/// Synthetic data hyper-cleaning problem; `n_hidden = 0` selects the linear
/// classifier, anything larger a two-layer perceptron.
#[no_mangle]
pub unsafe extern "C" fn bilevel_problem_hyperclean(
    n_train: usize,
    n_val: usize,
    n_features: usize,
    n_classes: usize,
    corrupt_fraction: f64,
    n_hidden: usize,
    seed: u64,
    out: *mut *mut BilevelProblemHandle,
) -> BilevelStatus {
    let cfg = HypercleanConfig {
        n_train,
        n_val,
        n_features,
        n_classes,
        corrupt_fraction,
        n_hidden,
        seed,
    };
    match synthetic_hyperclean(&cfg) {
        Ok(p) => emit_problem(out, Box::new(p)),
        Err(e) => status_from(&e),
    }
}

/// Release a problem handle. Passing NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn bilevel_problem_free(handle: *mut BilevelProblemHandle) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Upper and lower dimensions of a problem.
#[no_mangle]
pub unsafe extern "C" fn bilevel_problem_dims(
    handle: *const BilevelProblemHandle,
    upper_dim: *mut usize,
    lower_dim: *mut usize,
) -> BilevelStatus {
    if handle.is_null() || upper_dim.is_null() || lower_dim.is_null() {
        set_error("null argument");
        return BilevelStatus::NullArgument;
    }
    let problem = unsafe { &(*handle).problem };
    unsafe {
        *upper_dim = problem.upper_dim();
        *lower_dim = problem.lower_dim();
    }
    BilevelStatus::Ok
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts(ptr, len) })
    }
}

fn vector_arg(ptr: *const f64, len: usize, name: &str) -> Result<Vector, BilevelStatus> {
    let slice = unsafe { slice_arg(ptr, len) }.ok_or_else(|| {
        set_error(format!("{name} pointer is null"));
        BilevelStatus::NullArgument
    })?;
    Vector::new(slice.to_vec()).map_err(|e| status_from(&e))
}

/// Euclidean norm of the proximal-gradient residual at (x, y); zero exactly
/// at lower-level stationary points.
#[no_mangle]
pub unsafe extern "C" fn bilevel_residual_norm(
    handle: *const BilevelProblemHandle,
    x: *const f64,
    x_len: usize,
    y: *const f64,
    y_len: usize,
    alpha: f64,
    out: *mut f64,
) -> BilevelStatus {
    if handle.is_null() || out.is_null() {
        set_error("null argument");
        return BilevelStatus::NullArgument;
    }
    let problem = unsafe { &(*handle).problem };
    let xv = match vector_arg(x, x_len, "x") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let yv = match vector_arg(y, y_len, "y") {
        Ok(v) => v,
        Err(s) => return s,
    };
    match residual(problem.as_ref(), &xv, &yv, alpha) {
        Ok(r) => {
            unsafe { *out = r.norm() };
            BilevelStatus::Ok
        }
        Err(e) => status_from(&e),
    }
}

/// Run configuration mirrored over the C boundary. `mu <= 0` and
/// `truncate_at <= 0` mean "unset"; `adaptive_outer` selects adaptive-moment
/// outer steps instead of plain projected gradient.
#[repr(C)]
pub struct BilevelRunConfig {
    pub method: *const c_char,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub alpha_inner: f64,
    pub alpha_x: f64,
    pub alpha_z: f64,
    pub mu: f64,
    pub truncate_at: isize,
    pub seed: u64,
    pub adaptive_outer: bool,
}

fn solver_config(cfg: &BilevelRunConfig) -> Result<SolverConfig, BilevelStatus> {
    if cfg.method.is_null() {
        set_error("method string is null");
        return Err(BilevelStatus::NullArgument);
    }
    let method = unsafe { CStr::from_ptr(cfg.method) }
        .to_str()
        .map_err(|_| {
            set_error("method string is not valid UTF-8");
            BilevelStatus::InvalidArgument
        })?;
    let method = MethodKind::parse(method).map_err(|e| status_from(&e))?;
    let mut solver = SolverConfig::new(method);
    solver.outer_iters = cfg.outer_iters;
    solver.inner_iters = cfg.inner_iters;
    solver.inner_schedule = StepSchedule::constant(cfg.alpha_inner).map_err(|e| status_from(&e))?;
    solver.alpha_x = cfg.alpha_x;
    solver.alpha_z = cfg.alpha_z;
    if cfg.mu > 0.0 {
        solver.mu = Some(cfg.mu);
    }
    if cfg.truncate_at > 0 {
        solver.truncate_at = Some(cfg.truncate_at as usize);
    }
    solver.seed = cfg.seed;
    solver.outer_optimizer = if cfg.adaptive_outer {
        OuterOptimizer::AdaptiveMoment
    } else {
        OuterOptimizer::ProjectedGradient
    };
    Ok(solver)
}

/// Execute a solver run; on success the caller owns the returned handle.
#[no_mangle]
pub unsafe extern "C" fn bilevel_run(
    handle: *const BilevelProblemHandle,
    config: *const BilevelRunConfig,
    x0: *const f64,
    x0_len: usize,
    z0: *const f64,
    z0_len: usize,
    out: *mut *mut BilevelRunHandle,
) -> BilevelStatus {
    if handle.is_null() || config.is_null() || out.is_null() {
        set_error("null argument");
        return BilevelStatus::NullArgument;
    }
    let problem = unsafe { &(*handle).problem };
    let solver = match solver_config(unsafe { &*config }) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let x0 = match vector_arg(x0, x0_len, "x0") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let z0 = match vector_arg(z0, z0_len, "z0") {
        Ok(v) => v,
        Err(s) => return s,
    };
    match run_variant(problem.as_ref(), &solver, &x0, &z0) {
        Ok(state) => {
            let run = Box::new(BilevelRunHandle { state });
            unsafe { *out = Box::into_raw(run) };
            BilevelStatus::Ok
        }
        Err(e) => status_from(&e),
    }
}

/// Release a run handle. Passing NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn bilevel_run_free(handle: *mut BilevelRunHandle) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of logged outer steps in a run.
#[no_mangle]
pub unsafe extern "C" fn bilevel_run_steps(handle: *const BilevelRunHandle) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.state.logs.len()
}

/// One logged outer step; relative errors are NaN when the problem has no
/// known optimum.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct BilevelLogRow {
    pub t: usize,
    pub upper_value: f64,
    pub x_rel_err: f64,
    pub upper_rel_err: f64,
    pub selected_index: usize,
    pub grad_norm_x: f64,
    pub grad_norm_z: f64,
    pub residual: f64,
    pub wall_millis: u64,
}

#[no_mangle]
pub unsafe extern "C" fn bilevel_run_log(
    handle: *const BilevelRunHandle,
    t: usize,
    out: *mut BilevelLogRow,
) -> BilevelStatus {
    if handle.is_null() || out.is_null() {
        set_error("null argument");
        return BilevelStatus::NullArgument;
    }
    let state = &unsafe { &*handle }.state;
    let Some(log) = state.logs.get(t) else {
        set_error(format!("step {t} out of range (run has {})", state.logs.len()));
        return BilevelStatus::InvalidArgument;
    };
    unsafe {
        *out = BilevelLogRow {
            t: log.t,
            upper_value: log.upper_value,
            x_rel_err: log.x_rel_err.unwrap_or(f64::NAN),
            upper_rel_err: log.upper_rel_err.unwrap_or(f64::NAN),
            selected_index: log.k_bar,
            grad_norm_x: log.grad_norm_x,
            grad_norm_z: log.grad_norm_z,
            residual: log.residual_at_selected,
            wall_millis: log.wall_millis,
        };
    }
    BilevelStatus::Ok
}

fn copy_out(values: &Vector, buf: *mut f64, len: usize) -> BilevelStatus {
    if buf.is_null() {
        set_error("output buffer is null");
        return BilevelStatus::NullArgument;
    }
    if len < values.dim() {
        set_error(format!("buffer holds {len}, need {}", values.dim()));
        return BilevelStatus::BufferTooSmall;
    }
    unsafe { std::ptr::copy_nonoverlapping(values.as_slice().as_ptr(), buf, values.dim()) };
    BilevelStatus::Ok
}

/// Final upper variable of a run.
#[no_mangle]
pub unsafe extern "C" fn bilevel_run_final_upper(
    handle: *const BilevelRunHandle,
    buf: *mut f64,
    len: usize,
) -> BilevelStatus {
    if handle.is_null() {
        set_error("null argument");
        return BilevelStatus::NullArgument;
    }
    copy_out(&unsafe { &*handle }.state.x, buf, len)
}

/// Final inner initialization of a run.
#[no_mangle]
pub unsafe extern "C" fn bilevel_run_final_init(
    handle: *const BilevelRunHandle,
    buf: *mut f64,
    len: usize,
) -> BilevelStatus {
    if handle.is_null() {
        set_error("null argument");
        return BilevelStatus::NullArgument;
    }
    copy_out(&unsafe { &*handle }.state.z, buf, len)
}

/// Reverse-mode hypergradient of the truncated objective
/// F(x, y_{k̄}(x, z)) after `inner_iters` projected-gradient steps at rate
/// `alpha_inner`, truncated at `truncate_index` (1-based).
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bilevel_hypergradient(
    handle: *const BilevelProblemHandle,
    x: *const f64,
    x_len: usize,
    z: *const f64,
    z_len: usize,
    inner_iters: usize,
    truncate_index: usize,
    alpha_inner: f64,
    gx_buf: *mut f64,
    gx_len: usize,
    gz_buf: *mut f64,
    gz_len: usize,
) -> BilevelStatus {
    if handle.is_null() {
        set_error("null argument");
        return BilevelStatus::NullArgument;
    }
    let problem = unsafe { &(*handle).problem };
    let xv = match vector_arg(x, x_len, "x") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let zv = match vector_arg(z, z_len, "z") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let schedule = match StepSchedule::constant(alpha_inner) {
        Ok(s) => s,
        Err(e) => return status_from(&e),
    };
    let record = match pgd_forward(problem.as_ref(), &xv, &zv, inner_iters, &schedule) {
        Ok(r) => r,
        Err(e) => return status_from(&e),
    };
    let policy = HvpPolicy::for_problem(problem.as_ref());
    match unrolled_reverse(problem.as_ref(), &xv, &record, truncate_index, &policy) {
        Ok(hg) => {
            let status = copy_out(&hg.g_x, gx_buf, gx_len);
            if status != BilevelStatus::Ok {
                return status;
            }
            copy_out(&hg.g_z, gz_buf, gz_len)
        }
        Err(e) => status_from(&e),
    }
}
