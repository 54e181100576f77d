use slowfast_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn message() -> String {
    unsafe { CStr::from_ptr(sf_last_error_message()).to_string_lossy().into_owned() }
}

fn load(spec: &str) -> *mut SfScenario {
    let spec = CString::new(spec).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sf_scenario_load(spec.as_ptr(), &mut s) }, SfStatus::Ok);
    s
}

#[test]
fn dwell_round_trip() {
    unsafe {
        let s = load("builtin:dwell");
        let mut dim = 0usize;
        assert_eq!(sf_scenario_dim(s, &mut dim), SfStatus::Ok);
        assert_eq!(dim, 1);
        let mut pass = -1;
        assert_eq!(sf_check(s, &mut pass), SfStatus::Ok);
        assert_eq!(pass, 1);

        let mut e = ptr::null_mut();
        assert_eq!(sf_evolution_build(s, &mut e), SfStatus::Ok);
        let mut k = 0usize;
        assert_eq!(sf_evolution_jump_count(e, &mut k), SfStatus::Ok);
        assert_eq!(k, 1);
        let mut t1 = 0.0;
        assert_eq!(sf_evolution_jump_time(e, 0, &mut t1), SfStatus::Ok);
        assert!((t1 - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-10);
        let mut x = [0.0];
        assert_eq!(sf_evolution_eval(e, 0.5, x.as_mut_ptr(), 1), SfStatus::Ok);
        assert!((x[0].powi(3) - x[0] - 0.5).abs() < 1e-8 && x[0] > 1.0);
        assert_eq!(sf_evolution_jump_time(e, 3, &mut t1), SfStatus::InvalidArgument);
        assert!(message().contains("out of range"));

        let y0 = [-1.0];
        let mut tr = ptr::null_mut();
        assert_eq!(sf_trajectory_integrate(s, 1e-3, y0.as_ptr(), 1, &mut tr), SfStatus::Ok);
        let mut n = 0usize;
        assert_eq!(sf_trajectory_len(tr, &mut n), SfStatus::Ok);
        assert!(n > 10);
        let mut t = 0.0;
        assert_eq!(sf_trajectory_sample(tr, n - 1, &mut t, x.as_mut_ptr(), 1), SfStatus::Ok);
        assert_eq!(t, 0.6);
        assert_eq!(sf_trajectory_eval(tr, 0.1, x.as_mut_ptr(), 1), SfStatus::Ok);
        assert!(x[0] < -0.9);
        let mut d = 0.0;
        assert_eq!(sf_trajectory_dissipation(tr, &mut d), SfStatus::Ok);
        assert!(d > 0.0);

        sf_trajectory_free(tr);
        sf_evolution_free(e);
        sf_scenario_free(s);
    }
}

#[test]
fn errors_are_reported_by_code() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(sf_scenario_load(ptr::null(), &mut s), SfStatus::NullArgument);
        let bad = CString::new("builtin:nope").unwrap();
        assert_eq!(sf_scenario_load(bad.as_ptr(), &mut s), SfStatus::Parse);
        assert!(message().contains("nope"));

        let text = CString::new("name = q\nn = 1\nT = 1\nf = x1^2/2\nc0 = 1\na0 = 0\ny0 = 0\neps = 0.1\n").unwrap();
        assert_eq!(sf_scenario_from_text(text.as_ptr(), &mut s), SfStatus::Ok);
        let key = CString::new("no_such_key").unwrap();
        assert_eq!(sf_scenario_set_tolerance(s, key.as_ptr(), 1.0), SfStatus::InvalidArgument);
        let key = CString::new("ode_tol").unwrap();
        assert_eq!(sf_scenario_set_tolerance(s, key.as_ptr(), 1e-9), SfStatus::Ok);
        assert_eq!(message(), "");

        let x0 = [1.0, 2.0];
        let mut tr = ptr::null_mut();
        assert_eq!(sf_trajectory_integrate(s, 0.1, x0.as_ptr(), 2, &mut tr), SfStatus::InvalidArgument);
        assert_eq!(sf_trajectory_integrate(s, -1.0, x0.as_ptr(), 1, &mut tr), SfStatus::InvalidArgument);
        assert!(tr.is_null());
        sf_scenario_free(s);
        sf_scenario_free(ptr::null_mut());
    }
}

#[test]
fn negative_controls() {
    unsafe {
        let s = load("builtin:saddle_landing");
        let mut pass = -1;
        assert_eq!(sf_check(s, &mut pass), SfStatus::Assumption);
        assert_eq!(pass, 0);
        assert!(message().contains("landing"));
        let mut e = ptr::null_mut();
        assert_eq!(sf_evolution_build(s, &mut e), SfStatus::Assumption);
        assert!(e.is_null());
        sf_scenario_free(s);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/slowfast.h")).unwrap();
    for name in [
        "sf_scenario_load",
        "sf_scenario_free",
        "sf_evolution_build",
        "sf_evolution_eval",
        "sf_trajectory_integrate",
        "sf_trajectory_sample",
        "sf_last_error_message",
        "SF_STATUS_PANIC = 6",
        "typedef struct SfScenario SfScenario;",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
