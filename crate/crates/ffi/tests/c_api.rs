use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use orbit_mle_ffi::*;

fn truth() -> OmleState {
    OmleState {
        r: [6.878e6, 0.0, 0.0],
        v: [0.0, 6.0e3, 4.6e3],
    }
}

fn site(position: [f64; 3]) -> OmleSite {
    OmleSite {
        position,
        sigma_d: 10.0,
        kappa: 1e4,
        sigma_f: 1.0,
        f_c: 1e9,
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(omle_last_error_message()) }.to_string_lossy().into_owned()
}

/// Three radars with exact measurements of `truth()`.
unsafe fn noiseless_problem() -> *mut OmleProblem {
    let p = omle_problem_new();
    let positions = [[6.371e6, 0.0, 0.0], [6.2e6, 1.4e6, 0.3e6], [6.1e6, -0.5e6, 1.7e6]];
    for pos in positions {
        assert_eq!(omle_problem_add_site(p, &site(pos)), OmleStatus::Ok);
        let t = truth();
        let z = [t.r[0] - pos[0], t.r[1] - pos[1], t.r[2] - pos[2]];
        let d = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        let u = [z[0] / d, z[1] / d, z[2] / d];
        let f = 2e9 / 2.997_924_58e8 * (u[0] * t.v[0] + u[1] * t.v[1] + u[2] * t.v[2]);
        assert_eq!(omle_problem_add_measurement(p, &OmleMeasurement { d, u, f }), OmleStatus::Ok);
    }
    p
}

#[test]
fn noiseless_estimate_recovers_truth() {
    unsafe {
        let p = noiseless_problem();
        assert_eq!(omle_problem_site_count(p), 3);
        let mut est = std::mem::zeroed::<OmleEstimate>();
        assert_eq!(omle_problem_estimate(p, ptr::null(), 1, &mut est), OmleStatus::Ok);
        assert!(est.converged);
        let t = truth();
        for k in 0..3 {
            assert!((est.state.r[k] - t.r[k]).abs() <= 1e-6 * 6.878e6);
            assert!((est.state.v[k] - t.v[k]).abs() <= 1e-6 * 7.56e3);
        }
        assert!((est.objective_value + 3.0e4).abs() <= 1e-9 * 3.0e4);
        omle_problem_free(p);
    }
}

#[test]
fn objective_and_gradient_at_truth() {
    unsafe {
        let p = noiseless_problem();
        let mut f = 0.0;
        assert_eq!(omle_problem_objective(p, &truth(), &mut f), OmleStatus::Ok);
        assert!((f + 3.0e4).abs() < 1e-9);
        let mut g = [1.0; 6];
        assert_eq!(omle_problem_gradient(p, &truth(), &mut g), OmleStatus::Ok);
        assert!(g.iter().all(|x| x.abs() < 1e-6), "{g:?}");
        omle_problem_free(p);
    }
}

#[test]
fn simulate_is_seeded() {
    unsafe {
        let p = noiseless_problem();
        let q = noiseless_problem();
        assert_eq!(omle_problem_simulate(p, &truth(), 99), OmleStatus::Ok);
        assert_eq!(omle_problem_simulate(q, &truth(), 99), OmleStatus::Ok);
        let mut a = std::mem::zeroed::<OmleMeasurement>();
        let mut b = std::mem::zeroed::<OmleMeasurement>();
        for i in 0..3 {
            assert_eq!(omle_problem_measurement(p, i, &mut a), OmleStatus::Ok);
            assert_eq!(omle_problem_measurement(q, i, &mut b), OmleStatus::Ok);
            assert_eq!(a, b);
        }
        assert_eq!(omle_problem_measurement(p, 3, &mut a), OmleStatus::InvalidArgument);
        omle_problem_free(p);
        omle_problem_free(q);
    }
}

#[test]
fn forced_non_convergence_still_fills_result() {
    unsafe {
        let p = noiseless_problem();
        assert_eq!(omle_problem_simulate(p, &truth(), 5), OmleStatus::Ok);
        let mut opts = omle_solver_options_default();
        opts.max_iterations = 1;
        opts.num_starts = 1;
        let mut est = std::mem::zeroed::<OmleEstimate>();
        assert_eq!(omle_problem_estimate(p, &opts, 0, &mut est), OmleStatus::NotConverged);
        assert!(!est.converged);
        assert_eq!(est.iterations, 1);
        assert!(!last_error().is_empty());
        omle_problem_free(p);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        assert_eq!(omle_problem_add_site(ptr::null_mut(), &site([0.0; 3])), OmleStatus::NullPointer);
        assert!(last_error().contains("null"));

        let p = omle_problem_new();
        let mut bad = site([6.371e6, 0.0, 0.0]);
        bad.sigma_d = 0.0;
        assert_eq!(omle_problem_add_site(p, &bad), OmleStatus::InvalidArgument);
        assert!(last_error().contains("sigma_d"));

        let mut f = 0.0;
        assert_eq!(omle_problem_objective(p, &truth(), &mut f), OmleStatus::InvalidArgument);

        let near = truth().r;
        assert_eq!(omle_problem_add_site(p, &site([near[0] + 10.0, near[1], near[2]])), OmleStatus::Ok);
        assert_eq!(
            omle_problem_add_measurement(p, &OmleMeasurement { d: 10.0, u: [1.0, 0.0, 0.0], f: 0.0 }),
            OmleStatus::Ok
        );
        assert_eq!(omle_problem_objective(p, &truth(), &mut f), OmleStatus::SingularGeometry);

        let bounds = OmleBounds {
            r_min: 2.0,
            r_max: 1.0,
            v_max: 1.0,
        };
        assert_eq!(omle_problem_set_bounds(p, &bounds), OmleStatus::InvalidArgument);
        let defaults = omle_bounds_default();
        assert_eq!(omle_problem_set_bounds(p, &defaults), OmleStatus::Ok);
        assert!(last_error().is_empty());
        omle_problem_free(p);
        omle_problem_free(ptr::null_mut());
    }
}

#[test]
fn vmf_helpers() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(omle_vmf_mean_resultant(2.0, &mut out), OmleStatus::Ok);
        assert!((out - 0.537_314_720_727_548).abs() < 1e-14);
        assert_eq!(omle_vmf_mean_resultant(-1.0, &mut out), OmleStatus::InvalidArgument);
        let mu = [0.0, 0.0, 1.0];
        assert_eq!(omle_vmf_log_density(&mu, &mu, 1.0, &mut out), OmleStatus::Ok);
        assert!((out.exp() - 0.184_065_499_616_596).abs() < 1e-13);
        assert_eq!(omle_vmf_log_density(&mu, ptr::null(), 1.0, &mut out), OmleStatus::NullPointer);
    }
}

#[test]
fn bn_hand_value() {
    unsafe {
        let p = omle_problem_new();
        let s = OmleSite {
            position: [0.0; 3],
            sigma_d: 10.0,
            kappa: 4.0,
            sigma_f: 100.0,
            f_c: 1e9,
        };
        assert_eq!(omle_problem_add_site(p, &s), OmleStatus::Ok);
        let theta = OmleState {
            r: [1e6, 0.0, 0.0],
            v: [0.0, 7.5e3, 0.0],
        };
        // scaled delta 1e-3 gives 1e3 m and 1 m/s
        let mut b = 0.0;
        assert_eq!(omle_problem_compute_bn(p, &theta, 1e-3, &mut b), OmleStatus::Ok);
        let m = 2e9 / 2.997_924_58e8;
        let dop = m * (1e6 * 1.0 + 7.5e3 * 1e3 + 1e3) / 1e6;
        let expect = 0.5 * (1e6 / 100.0 + 2.0 * 4.0 * 1e3 / 1e6 + dop * dop / 1e4);
        assert!((b - expect).abs() <= 1e-12 * expect);
        assert_eq!(omle_problem_compute_bn(p, &theta, 0.0, &mut b), OmleStatus::InvalidArgument);
        omle_problem_free(p);
    }
}

#[test]
fn header_is_generated_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("orbit_mle.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build script");
    for sym in [
        "typedef struct OmleProblem OmleProblem;",
        "OMLE_STATUS_NOT_CONVERGED = 5",
        "omle_problem_estimate",
        "omle_last_error_message",
        "omle_vmf_log_density",
    ] {
        assert!(text.contains(sym), "missing `{sym}`");
    }
    // syntax check with the system C compiler when one is installed
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
