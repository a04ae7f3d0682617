//! Constrained minimisation of the negative log-likelihood over the compact
//! feasible set.
//!
//! Each start runs a projected descent in the scaled parameter space. The
//! search direction is the Gauss–Newton direction of the sum-of-squares form
//! of the objective (the steepest-descent direction when that system is not
//! positive definite); steps are projected onto the feasible set before the
//! Armijo test.

use nalgebra::{Matrix3, Matrix6, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::likelihood::{gauss_newton_system, objective, ChannelMask};
use crate::rng::RandomStream;
use crate::types::{
    project_to_feasible, MeasurementTuple, ParameterBounds, RadarSite, StateVector, Vec3, POSITION_SCALE, SPEED_OF_LIGHT,
    VELOCITY_SCALE,
};

/// Standard deviation of multi-start perturbations, scaled units.
pub const START_PERTURBATION: f64 = 0.05;
const MAX_BACKTRACKS: usize = 80;
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub num_starts: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-12,
            num_starts: 8,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be >= 1"));
        }
        for (name, x) in [("gradient_tolerance", self.gradient_tolerance), ("step_tolerance", self.step_tolerance)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(invalid(name, format!("must lie in (0, 1), got {x}")));
            }
        }
        if self.num_starts == 0 {
            return Err(invalid("num_starts", "must be >= 1"));
        }
        for (name, x) in [("armijo_c", self.armijo_c), ("backtrack_factor", self.backtrack_factor)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(invalid(name, format!("must lie in (0, 1), got {x}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationResult {
    pub estimate: StateVector,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the scaled projected gradient at the returned point.
    pub gradient_norm: f64,
    /// Norm of the last accepted (or attempted) scaled step.
    pub last_step: f64,
    pub start_index: usize,
}

/// Accepted objective values and iterates of one descent.
#[derive(Debug, Clone)]
pub struct DescentTrace {
    pub result: EstimationResult,
    pub objective_history: Vec<f64>,
    pub iterates: Vec<StateVector>,
}

/// Closed-form starting point: the mean of the per-radar range-along-bearing
/// points for position, and the least-squares fit of the Doppler equations
/// for velocity.
pub fn initialize(sites: &[RadarSite], meas: &[MeasurementTuple], bounds: &ParameterBounds) -> Result<StateVector> {
    if sites.is_empty() || meas.is_empty() {
        return Err(Error::EmptyInput("initialization needs at least one measurement"));
    }
    if sites.len() != meas.len() {
        return Err(Error::LengthMismatch {
            sites: sites.len(),
            measurements: meas.len(),
        });
    }
    let n = sites.len() as f64;
    let r_hat = sites.iter().zip(meas).map(|(s, m)| s.s + m.u * m.d).sum::<Vec3>() / n;

    let mut a = Matrix3::zeros();
    let mut b = Vec3::zeros();
    for (s, m) in sites.iter().zip(meas) {
        let Some(u) = (r_hat - s.s).try_normalize(0.0) else {
            continue;
        };
        let mf = 2.0 * s.f_c / SPEED_OF_LIGHT;
        a += u * u.transpose() * (mf * mf);
        b += u * (mf * m.f);
    }
    let v_hat = solve_velocity(a, b);
    project_to_feasible(&StateVector { r: r_hat, v: v_hat }, bounds)
}

fn solve_velocity(a: Matrix3<f64>, b: Vec3) -> Vec3 {
    let eig = a.symmetric_eigenvalues();
    let max = eig.max();
    if max <= 0.0 {
        return Vec3::zeros();
    }
    // fewer than three well-conditioned rows: damp the normal equations
    let a = if eig.min() < 1e-9 * max {
        a + Matrix3::identity() * (1e-9 * a.trace())
    } else {
        a
    };
    a.cholesky().map(|c| c.solve(&b)).unwrap_or_else(Vec3::zeros)
}

struct Problem<'a> {
    sites: &'a [RadarSite],
    meas: &'a [MeasurementTuple],
    bounds: ParameterBounds,
}

const SCALES: [f64; 6] = [
    POSITION_SCALE,
    POSITION_SCALE,
    POSITION_SCALE,
    VELOCITY_SCALE,
    VELOCITY_SCALE,
    VELOCITY_SCALE,
];

impl Problem<'_> {
    fn state(&self, x: &Vector6<f64>) -> StateVector {
        StateVector::from_scaled(x)
    }

    fn project(&self, x: &Vector6<f64>) -> Result<Vector6<f64>> {
        Ok(project_to_feasible(&self.state(x), &self.bounds)?.to_scaled())
    }

    /// Objective at a scaled point; `+inf` where it is undefined.
    fn value(&self, x: &Vector6<f64>) -> f64 {
        match objective(&self.state(x), self.sites, self.meas) {
            Ok(ob) if ob.total.is_finite() => ob.total,
            _ => f64::INFINITY,
        }
    }

    /// Scaled Gauss–Newton matrix and gradient.
    fn system(&self, x: &Vector6<f64>) -> Result<(Matrix6<f64>, Vector6<f64>)> {
        let (h, g) = gauss_newton_system(&self.state(x), self.sites, self.meas, ChannelMask::ALL)?;
        let d = Vector6::from(SCALES);
        let g = g.component_mul(&d);
        let h = Matrix6::from_fn(|i, j| h[(i, j)] * SCALES[i] * SCALES[j]);
        Ok((h, g))
    }
}

fn search_direction(h: &Matrix6<f64>, g: &Vector6<f64>) -> Vector6<f64> {
    let damping = 1e-12 * h.diagonal().max().max(f64::MIN_POSITIVE);
    let hd = h + Matrix6::identity() * damping;
    match hd.cholesky() {
        Some(c) => {
            let d = c.solve(&(-g));
            if d.iter().all(|x| x.is_finite()) && g.dot(&d) < 0.0 {
                d
            } else {
                -g
            }
        }
        None => -g,
    }
}

/// Runs one projected descent from `start` (projected first).
pub fn descend(
    start: &StateVector,
    sites: &[RadarSite],
    meas: &[MeasurementTuple],
    bounds: &ParameterBounds,
    opts: &SolverOptions,
    start_index: usize,
) -> Result<DescentTrace> {
    let problem = Problem {
        sites,
        meas,
        bounds: *bounds,
    };
    let mut x = problem.project(&start.to_scaled())?;
    let mut fx = problem.value(&x);
    if !fx.is_finite() {
        return Err(Error::OptimizationFailed(format!("objective undefined at start {start_index}")));
    }
    let mut history = vec![fx];
    let mut iterates = vec![problem.state(&x)];
    let mut converged = false;
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    let mut gradient_norm;

    loop {
        let (h, g) = problem.system(&x)?;
        gradient_norm = (x - problem.project(&(x - g))?).norm();
        if gradient_norm <= opts.gradient_tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let d = search_direction(&h, &g);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let trial = problem.project(&(x + d * alpha))?;
            let step = trial - x;
            last_step = step.norm();
            if last_step <= opts.step_tolerance {
                break;
            }
            let ft = problem.value(&trial);
            if ft <= fx + opts.armijo_c * g.dot(&step) {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            alpha *= opts.backtrack_factor;
        }
        if accepted {
            history.push(fx);
            iterates.push(problem.state(&x));
        }
        if last_step <= opts.step_tolerance {
            converged = true;
            let (_, g) = problem.system(&x)?;
            gradient_norm = (x - problem.project(&(x - g))?).norm();
            break;
        }
        if !accepted {
            // no admissible step and no vanishing step: give up on this start
            break;
        }
    }

    Ok(DescentTrace {
        result: EstimationResult {
            estimate: problem.state(&x),
            objective_value: fx,
            converged,
            iterations,
            gradient_norm,
            last_step,
            start_index,
        },
        objective_history: history,
        iterates,
    })
}

/// Starting states: the closed-form initial guess followed by
/// `num_starts - 1` feasible scaled-Gaussian perturbations of it drawn in order
/// from `stream`.
pub fn start_points(
    init: &StateVector,
    bounds: &ParameterBounds,
    num_starts: usize,
    stream: &mut RandomStream,
) -> Result<Vec<StateVector>> {
    let base = init.to_scaled();
    let mut starts = vec![*init];
    for _ in 1..num_starts {
        let noise = Vector6::from_fn(|_, _| stream.sample::<f64, _>(StandardNormal));
        let s = StateVector::from_scaled(&(base + noise * START_PERTURBATION));
        starts.push(project_to_feasible(&s, bounds)?);
    }
    Ok(starts)
}

/// Maximum-likelihood estimate: best of `num_starts` projected descents.
///
/// The result depends only on the inputs and the stream state; starts run in
/// parallel and the winner is chosen by lowest objective, ties broken by the
/// lowest start index.
pub fn estimate(
    sites: &[RadarSite],
    meas: &[MeasurementTuple],
    bounds: &ParameterBounds,
    opts: &SolverOptions,
    stream: &mut RandomStream,
) -> Result<EstimationResult> {
    opts.validate()?;
    bounds.validate()?;
    let init = initialize(sites, meas, bounds)?;
    let starts = start_points(&init, bounds, opts.num_starts, stream)?;
    let outcomes: Vec<Result<DescentTrace>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, s)| descend(s, sites, meas, bounds, opts, k))
        .collect();

    let mut best: Option<EstimationResult> = None;
    let mut first_err = None;
    for outcome in outcomes {
        match outcome {
            Ok(trace) => {
                let r = trace.result;
                if !r.objective_value.is_finite() {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(b) => r.objective_value < b.objective_value - TIE_TOLERANCE * b.objective_value.abs().max(1.0),
                };
                if better {
                    best = Some(r);
                }
            }
            // geometry errors are the caller's problem; others just lose the start
            Err(e @ Error::SingularGeometry { .. }) => return Err(e),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| {
        Error::OptimizationFailed(match first_err {
            Some(e) => format!("no start produced a finite objective ({e})"),
            None => "no start produced a finite objective".into(),
        })
    })
}
