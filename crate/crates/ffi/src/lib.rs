//! C interface to `slowfast`.
//!
//! Every function returns an [`SfStatus`]; results are written through out
//! pointers. Objects are opaque handles released with the matching `_free`
//! function. After a non-zero status, `sf_last_error_message` describes the
//! failure on the calling thread.

use nalgebra::DVector;
use slowfast::config::Tolerances;
use slowfast::energy::Scenario;
use slowfast::evolution::{build_slow_fast_evolution, PiecewiseEvolution};
use slowfast::fast::HetOptions;
use slowfast::flow::{integrate_eps_flow, FlowOptions, Trajectory};
use slowfast::pipeline::cmd_check;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// An argument was out of range or malformed.
    InvalidArgument = 2,
    /// The scenario could not be parsed or loaded.
    Parse = 3,
    /// A modelling assumption does not hold.
    Assumption = 4,
    /// A numerical stage failed.
    Numerical = 5,
    /// An internal panic was caught.
    Panic = 6,
}

/// A scenario together with its tolerances.
pub struct SfScenario {
    scenario: Scenario,
    tol: Tolerances,
}

/// A limit evolution built from a scenario.
pub struct SfEvolution {
    scenario: Scenario,
    tol: Tolerances,
    pe: PiecewiseEvolution,
}

/// One ε-flow trajectory.
pub struct SfTrajectory {
    traj: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Outcome = Result<(), (SfStatus, String)>;

fn guard<F: FnOnce() -> Outcome>(f: F) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SfStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            SfStatus::Panic
        }
    }
}

fn null() -> (SfStatus, String) {
    (SfStatus::NullArgument, "null pointer argument".into())
}

fn invalid(msg: impl Into<String>) -> (SfStatus, String) {
    (SfStatus::InvalidArgument, msg.into())
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, (SfStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn as_str<'a>(p: *const c_char) -> Result<&'a str, (SfStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("string is not valid UTF-8"))
}

unsafe fn write<T>(out: *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

unsafe fn write_vector(out: *mut f64, len: usize, x: &DVector<f64>) -> Outcome {
    if out.is_null() {
        return Err(null());
    }
    if len != x.len() {
        return Err(invalid(format!("buffer length {len} does not match dimension {}", x.len())));
    }
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(x.as_slice());
    Ok(())
}

/// Message describing the last failure on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a scenario from a file path or `builtin:NAME`.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_load(spec: *const c_char, out: *mut *mut SfScenario) -> SfStatus {
    guard(|| {
        let spec = as_str(spec)?;
        let scenario = Scenario::load(spec).map_err(|e| (SfStatus::Parse, e.to_string()))?;
        let handle = Box::new(SfScenario { scenario, tol: Tolerances::default() });
        write(out, Box::into_raw(handle))
    })
}

/// Parses a scenario from its text form.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_from_text(text: *const c_char, out: *mut *mut SfScenario) -> SfStatus {
    guard(|| {
        let text = as_str(text)?;
        let scenario = Scenario::from_text(text).map_err(|e| (SfStatus::Parse, e.to_string()))?;
        let handle = Box::new(SfScenario { scenario, tol: Tolerances::default() });
        write(out, Box::into_raw(handle))
    })
}

/// Releases a scenario; null is ignored.
///
/// # Safety
/// `scenario` must come from `sf_scenario_load` or `sf_scenario_from_text`
/// and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_free(scenario: *mut SfScenario) {
    if !scenario.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(scenario))));
    }
}

/// State-space dimension of the scenario.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_dim(scenario: *const SfScenario, out: *mut usize) -> SfStatus {
    guard(|| write(out, as_ref(scenario)?.scenario.dim))
}

/// Time horizon `T` of the scenario.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_horizon(scenario: *const SfScenario, out: *mut f64) -> SfStatus {
    guard(|| write(out, as_ref(scenario)?.scenario.horizon))
}

/// Overrides one tolerance of the scenario handle.
///
/// # Safety
/// `scenario` must be valid and `key` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sf_scenario_set_tolerance(scenario: *mut SfScenario, key: *const c_char, value: f64) -> SfStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(null)?;
        let key = as_str(key)?;
        s.tol.set(key, value).map_err(|e| invalid(e.to_string()))
    })
}

/// Runs every assumption check; `*pass` is 1 when all hold. Otherwise
/// `*pass` is 0, the status is `Assumption` and the message lists the
/// failed checks.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_check(scenario: *const SfScenario, pass: *mut i32) -> SfStatus {
    guard(|| {
        let s = as_ref(scenario)?;
        let rep = cmd_check(&s.scenario, &s.tol, HetOptions::default());
        write(pass, i32::from(rep.pass()))?;
        if rep.pass() {
            Ok(())
        } else {
            Err((SfStatus::Assumption, rep.failures()))
        }
    })
}

/// Builds the limit evolution from `y0`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_evolution_build(scenario: *const SfScenario, out: *mut *mut SfEvolution) -> SfStatus {
    guard(|| {
        let s = as_ref(scenario)?;
        if out.is_null() {
            return Err(null());
        }
        let pe = build_slow_fast_evolution(&s.scenario, &s.tol, HetOptions::default()).map_err(|e| {
            let status = if e.is_assumption() { SfStatus::Assumption } else { SfStatus::Numerical };
            (status, e.to_string())
        })?;
        let handle = Box::new(SfEvolution { scenario: s.scenario.clone(), tol: s.tol.clone(), pe });
        write(out, Box::into_raw(handle))
    })
}

/// Releases an evolution; null is ignored.
///
/// # Safety
/// `evolution` must come from `sf_evolution_build` and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_evolution_free(evolution: *mut SfEvolution) {
    if !evolution.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(evolution))));
    }
}

/// Number of jumps.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_evolution_jump_count(evolution: *const SfEvolution, out: *mut usize) -> SfStatus {
    guard(|| write(out, as_ref(evolution)?.pe.jumps.len()))
}

/// Time of jump `index` (0-based).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_evolution_jump_time(evolution: *const SfEvolution, index: usize, out: *mut f64) -> SfStatus {
    guard(|| {
        let e = as_ref(evolution)?;
        let j = e.pe.jumps.get(index).ok_or_else(|| invalid(format!("jump index {index} out of range")))?;
        write(out, j.time())
    })
}

/// Evaluates `u(t)` (right limit at jump times) into `x[0..len]`.
///
/// # Safety
/// `x` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_evolution_eval(evolution: *const SfEvolution, t: f64, x: *mut f64, len: usize) -> SfStatus {
    guard(|| {
        let e = as_ref(evolution)?;
        let u = e.pe.eval_u(&e.scenario, t, &e.tol).map_err(|err| invalid(err.to_string()))?;
        write_vector(x, len, &u)
    })
}

/// Integrates the ε-flow from `x0[0..len]` over `[0, T]`.
///
/// # Safety
/// `x0` must point to `len` readable doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_integrate(
    scenario: *const SfScenario,
    eps: f64,
    x0: *const f64,
    len: usize,
    out: *mut *mut SfTrajectory,
) -> SfStatus {
    guard(|| {
        let s = as_ref(scenario)?;
        if x0.is_null() || out.is_null() {
            return Err(null());
        }
        if len != s.scenario.dim {
            return Err(invalid(format!("initial point has {len} components, expected {}", s.scenario.dim)));
        }
        let x = DVector::from_column_slice(std::slice::from_raw_parts(x0, len));
        let traj = integrate_eps_flow(&s.scenario, eps, &x, &s.tol, FlowOptions::default()).map_err(|e| {
            let status = match e {
                slowfast::flow::FlowError::BadEps(_) | slowfast::flow::FlowError::BadInit => SfStatus::InvalidArgument,
                _ => SfStatus::Numerical,
            };
            (status, e.to_string())
        })?;
        write(out, Box::into_raw(Box::new(SfTrajectory { traj })))
    })
}

/// Releases a trajectory; null is ignored.
///
/// # Safety
/// `trajectory` must come from `sf_trajectory_integrate` and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_free(trajectory: *mut SfTrajectory) {
    if !trajectory.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(trajectory))));
    }
}

/// Number of accepted samples.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_len(trajectory: *const SfTrajectory, out: *mut usize) -> SfStatus {
    guard(|| write(out, as_ref(trajectory)?.traj.times.len()))
}

/// Sample `index`: its time into `*t` and state into `x[0..len]`.
///
/// # Safety
/// `t` must be valid and `x` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_sample(
    trajectory: *const SfTrajectory,
    index: usize,
    t: *mut f64,
    x: *mut f64,
    len: usize,
) -> SfStatus {
    guard(|| {
        let tr = &as_ref(trajectory)?.traj;
        if index >= tr.times.len() {
            return Err(invalid(format!("sample index {index} out of range")));
        }
        write_vector(x, len, &tr.states[index])?;
        write(t, tr.times[index])
    })
}

/// Dense output `u_ε(t)` into `x[0..len]`.
///
/// # Safety
/// `x` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_eval(trajectory: *const SfTrajectory, t: f64, x: *mut f64, len: usize) -> SfStatus {
    guard(|| {
        let tr = &as_ref(trajectory)?.traj;
        if !(t >= 0.0 && t <= tr.horizon()) {
            return Err(invalid(format!("t={t} outside [0, {}]", tr.horizon())));
        }
        write_vector(x, len, &tr.eval(t))
    })
}

/// Total dissipation `ε∫|u̇|²`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_dissipation(trajectory: *const SfTrajectory, out: *mut f64) -> SfStatus {
    guard(|| write(out, as_ref(trajectory)?.traj.total_dissipation()))
}
