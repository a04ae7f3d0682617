//! C ABI for the orbit estimator.
//!
//! Every function returns an [`OmleStatus`]; on failure a description is
//! available from [`omle_last_error_message`] on the same thread. Problems
//! are opaque handles created by [`omle_problem_new`] and released with
//! [`omle_problem_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use orbit_mle::consistency::compute_bn;
use orbit_mle::likelihood::{gradient, objective};
use orbit_mle::measurement::simulate_scenario;
use orbit_mle::rng::{derive_stream, stream_ids};
use orbit_mle::solver::{estimate, SolverOptions};
use orbit_mle::vmf::{vmf_log_density, vmf_mean_resultant, VmfParams};
use orbit_mle::{Error, MeasurementTuple, ParameterBounds, RadarSite, Scenario, SiteNoise, StateVector, Vec3};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SingularGeometry = 3,
    OptimizationFailed = 4,
    /// The estimate was written but the solver did not meet its tolerances.
    NotConverged = 5,
    Internal = 6,
}

/// Position (m) and velocity (m/s).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmleState {
    pub r: [f64; 3],
    pub v: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmleSite {
    pub position: [f64; 3],
    pub sigma_d: f64,
    pub kappa: f64,
    pub sigma_f: f64,
    pub f_c: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmleMeasurement {
    pub d: f64,
    pub u: [f64; 3],
    pub f: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmleBounds {
    pub r_min: f64,
    pub r_max: f64,
    pub v_max: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmleSolverOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub num_starts: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmleEstimate {
    pub state: OmleState,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub start_index: usize,
}

/// Radars, their measurements and the feasible set.
pub struct OmleProblem {
    sites: Vec<RadarSite>,
    meas: Vec<MeasurementTuple>,
    bounds: ParameterBounds,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(OmleStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::SingularGeometry { .. } => OmleStatus::SingularGeometry,
            Error::OptimizationFailed(_) => OmleStatus::OptimizationFailed,
            _ => OmleStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(OmleStatus::NullPointer, format!("null pointer: {what}"))
}

fn guarded(f: impl FnOnce() -> Result<OmleStatus, Fail>) -> OmleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => {
            if status == OmleStatus::Ok {
                set_last_error("");
            }
            status
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            OmleStatus::Internal
        }
    }
}

/// # Safety
/// `p` must be null or point to a valid, properly aligned `T`.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn to_state(s: &OmleState) -> Result<StateVector, Fail> {
    Ok(StateVector::new(Vec3::from(s.r), Vec3::from(s.v))?)
}

fn from_state(s: &StateVector) -> OmleState {
    OmleState {
        r: s.r.into(),
        v: s.v.into(),
    }
}

impl OmleProblem {
    fn check_ready(&self) -> Result<(), Fail> {
        if self.sites.is_empty() {
            return Err(Fail(OmleStatus::InvalidArgument, "problem has no sites".into()));
        }
        if self.sites.len() != self.meas.len() {
            return Err(Error::LengthMismatch {
                sites: self.sites.len(),
                measurements: self.meas.len(),
            }
            .into());
        }
        Ok(())
    }
}

/// Default solver settings.
#[no_mangle]
pub extern "C" fn omle_solver_options_default() -> OmleSolverOptions {
    let d = SolverOptions::default();
    OmleSolverOptions {
        max_iterations: d.max_iterations,
        gradient_tolerance: d.gradient_tolerance,
        step_tolerance: d.step_tolerance,
        num_starts: d.num_starts,
        armijo_c: d.armijo_c,
        backtrack_factor: d.backtrack_factor,
    }
}

/// Default feasible set.
#[no_mangle]
pub extern "C" fn omle_bounds_default() -> OmleBounds {
    let b = ParameterBounds::default();
    OmleBounds {
        r_min: b.r_min,
        r_max: b.r_max,
        v_max: b.v_max,
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn omle_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// New empty problem with default bounds. Returns null only on allocation failure.
#[no_mangle]
pub extern "C" fn omle_problem_new() -> *mut OmleProblem {
    catch_unwind(|| {
        Box::into_raw(Box::new(OmleProblem {
            sites: Vec::new(),
            meas: Vec::new(),
            bounds: ParameterBounds::default(),
        }))
    })
    .unwrap_or(ptr::null_mut())
}

/// # Safety
/// `problem` must be null or a handle from [`omle_problem_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_free(problem: *mut OmleProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_site_count(problem: *const OmleProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.sites.len())
}

/// # Safety
/// Pointers must be null or valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_add_site(problem: *mut OmleProblem, site: *const OmleSite) -> OmleStatus {
    guarded(|| {
        let p = deref_mut(problem, "problem")?;
        let s = deref(site, "site")?;
        let noise = SiteNoise {
            sigma_d: s.sigma_d,
            kappa: s.kappa,
            sigma_f: s.sigma_f,
            f_c: s.f_c,
        };
        p.sites.push(RadarSite::new(Vec3::from(s.position), noise)?);
        Ok(OmleStatus::Ok)
    })
}

/// Appends the measurement for the next site in order.
///
/// # Safety
/// Pointers must be null or valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_add_measurement(problem: *mut OmleProblem, m: *const OmleMeasurement) -> OmleStatus {
    guarded(|| {
        let p = deref_mut(problem, "problem")?;
        let m = deref(m, "measurement")?;
        let tuple = MeasurementTuple {
            d: m.d,
            u: Vec3::from(m.u),
            f: m.f,
        };
        tuple.validate()?;
        p.meas.push(tuple);
        Ok(OmleStatus::Ok)
    })
}

/// # Safety
/// Pointers must be null or valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_set_bounds(problem: *mut OmleProblem, bounds: *const OmleBounds) -> OmleStatus {
    guarded(|| {
        let p = deref_mut(problem, "problem")?;
        let b = deref(bounds, "bounds")?;
        p.bounds = ParameterBounds::new(b.r_min, b.r_max, b.v_max)?;
        Ok(OmleStatus::Ok)
    })
}

/// Replaces the measurements with one simulated tuple per site, drawn at
/// `truth` with the streams of `seed`.
///
/// # Safety
/// Pointers must be null or valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_simulate(problem: *mut OmleProblem, truth: *const OmleState, seed: u64) -> OmleStatus {
    guarded(|| {
        let p = deref_mut(problem, "problem")?;
        let truth = to_state(deref(truth, "truth")?)?;
        let scn = Scenario::new(truth, p.sites.clone(), p.bounds, seed)?;
        p.meas = simulate_scenario(&scn)?;
        Ok(OmleStatus::Ok)
    })
}

/// Copies measurement `index` into `out`.
///
/// # Safety
/// Pointers must be null or valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_measurement(
    problem: *const OmleProblem,
    index: usize,
    out: *mut OmleMeasurement,
) -> OmleStatus {
    guarded(|| {
        let p = deref(problem, "problem")?;
        let out = deref_mut(out, "out")?;
        let m = p
            .meas
            .get(index)
            .ok_or_else(|| Fail(OmleStatus::InvalidArgument, format!("no measurement {index}")))?;
        *out = OmleMeasurement {
            d: m.d,
            u: m.u.into(),
            f: m.f,
        };
        Ok(OmleStatus::Ok)
    })
}

/// Negative log-likelihood (up to a constant) at `theta`.
///
/// # Safety
/// Pointers must be null or valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_objective(
    problem: *const OmleProblem,
    theta: *const OmleState,
    out: *mut f64,
) -> OmleStatus {
    guarded(|| {
        let p = deref(problem, "problem")?;
        let theta = to_state(deref(theta, "theta")?)?;
        let out = deref_mut(out, "out")?;
        p.check_ready()?;
        *out = objective(&theta, &p.sites, &p.meas)?.total;
        Ok(OmleStatus::Ok)
    })
}

/// Objective gradient at `theta`: three position then three velocity components.
///
/// # Safety
/// `out` must be null or point to six writable doubles.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_gradient(
    problem: *const OmleProblem,
    theta: *const OmleState,
    out: *mut [f64; 6],
) -> OmleStatus {
    guarded(|| {
        let p = deref(problem, "problem")?;
        let theta = to_state(deref(theta, "theta")?)?;
        let out = deref_mut(out, "out")?;
        p.check_ready()?;
        let g = gradient(&theta, &p.sites, &p.meas)?;
        out.copy_from_slice(g.as_slice());
        Ok(OmleStatus::Ok)
    })
}

/// Maximum-likelihood estimate. `options` may be null for defaults. Returns
/// `NotConverged` with `out` filled when the solver stops early.
///
/// # Safety
/// Pointers must be null (where allowed) or valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_estimate(
    problem: *const OmleProblem,
    options: *const OmleSolverOptions,
    seed: u64,
    out: *mut OmleEstimate,
) -> OmleStatus {
    guarded(|| {
        let p = deref(problem, "problem")?;
        let out = deref_mut(out, "out")?;
        let o = options.as_ref().copied().unwrap_or_else(|| omle_solver_options_default());
        let opts = SolverOptions {
            max_iterations: o.max_iterations,
            gradient_tolerance: o.gradient_tolerance,
            step_tolerance: o.step_tolerance,
            num_starts: o.num_starts,
            armijo_c: o.armijo_c,
            backtrack_factor: o.backtrack_factor,
        };
        p.check_ready()?;
        let res = estimate(&p.sites, &p.meas, &p.bounds, &opts, &mut derive_stream(seed, stream_ids::SOLVER))?;
        *out = OmleEstimate {
            state: from_state(&res.estimate),
            objective_value: res.objective_value,
            converged: res.converged,
            iterations: res.iterations,
            gradient_norm: res.gradient_norm,
            start_index: res.start_index,
        };
        if res.converged {
            Ok(OmleStatus::Ok)
        } else {
            Err(Fail(OmleStatus::NotConverged, format!("no convergence after {} iterations", res.iterations)))
        }
    })
}

/// Normalising constant `b_n` over the problem's sites with scaled perturbation `delta`.
///
/// # Safety
/// Pointers must be null or valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn omle_problem_compute_bn(
    problem: *const OmleProblem,
    theta0: *const OmleState,
    delta: f64,
    out: *mut f64,
) -> OmleStatus {
    guarded(|| {
        let p = deref(problem, "problem")?;
        let theta0 = to_state(deref(theta0, "theta0")?)?;
        let out = deref_mut(out, "out")?;
        if p.sites.is_empty() {
            return Err(Fail(OmleStatus::InvalidArgument, "problem has no sites".into()));
        }
        *out = compute_bn(&p.sites, &theta0, delta)?;
        Ok(OmleStatus::Ok)
    })
}

/// von Mises–Fisher log-density of unit vector `u` about unit mean `mu`.
///
/// # Safety
/// Pointers must be null or valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn omle_vmf_log_density(u: *const [f64; 3], mu: *const [f64; 3], kappa: f64, out: *mut f64) -> OmleStatus {
    guarded(|| {
        let u = Vec3::from(*deref(u, "u")?);
        let mu = Vec3::from(*deref(mu, "mu")?);
        let out = deref_mut(out, "out")?;
        *out = vmf_log_density(&u, &VmfParams::new(mu, kappa)?);
        Ok(OmleStatus::Ok)
    })
}

/// Mean resultant length `coth(kappa) - 1/kappa`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn omle_vmf_mean_resultant(kappa: f64, out: *mut f64) -> OmleStatus {
    guarded(|| {
        let out = deref_mut(out, "out")?;
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Fail(OmleStatus::InvalidArgument, format!("kappa must be positive, got {kappa}")));
        }
        *out = vmf_mean_resultant(kappa);
        Ok(OmleStatus::Ok)
    })
}
