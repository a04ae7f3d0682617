//! Monte Carlo checks of the conditions behind strong consistency of the
//! estimator, the normalising sequence `b_n`, the unit-vector perturbation
//! approximations, and the sweep that shows estimation error shrinking as the
//! number of radars grows.

use nalgebra::Vector6;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::likelihood::{log_density_predicted, BallPredictions, BallSupConfig, ChannelMask};
use crate::measurement::{generate_sites, noiseless_measurements, predict, simulate_tuple, PredictedMeasurement};
use crate::rng::{derive_stream, stream_ids, RandomStream};
use crate::solver::{estimate, SolverOptions};
use crate::types::{
    check_geometry, project_to_feasible, MeasurementTuple, ParameterBounds, RadarSite, Scenario, SiteNoise, StateVector,
    Vec3, POSITION_SCALE, VELOCITY_SCALE,
};

/// Number of standard errors a margin must clear to count as significant.
pub const SIGNIFICANCE_SE: f64 = 3.0;
/// Largest tolerated fraction of failed solves per radar count.
pub const MAX_SWEEP_FAILURE_RATE: f64 = 0.10;

/// `b_n` with the perturbation bound `delta` in scaled units: positions move
/// by `delta * 1e6` m and velocities by `delta * 1e3` m/s.
pub fn compute_bn(sites: &[RadarSite], theta0: &StateVector, delta: f64) -> Result<f64> {
    compute_bn_raw(sites, theta0, delta * POSITION_SCALE, delta * VELOCITY_SCALE)
}

/// `b_n` with explicit SI perturbation bounds for position and velocity.
///
/// Each radar contributes
/// `dr^2 / sd^2 + 2 k dr / |z0| + (M (|z0| dv + |v0| dr + dr dv) / |z0|)^2 / sf^2`
/// with `z0 = r0 - s`, and the sum is halved.
pub fn compute_bn_raw(sites: &[RadarSite], theta0: &StateVector, delta_r: f64, delta_v: f64) -> Result<f64> {
    if !(delta_r > 0.0 && delta_r.is_finite()) {
        return Err(invalid("delta", format!("position bound must be positive, got {delta_r}")));
    }
    if !(delta_v > 0.0 && delta_v.is_finite()) {
        return Err(invalid("delta", format!("velocity bound must be positive, got {delta_v}")));
    }
    bn_terms(sites, theta0, delta_r, delta_v).map(|t| 0.5 * t.iter().sum::<f64>())
}

fn bn_terms(sites: &[RadarSite], theta0: &StateVector, delta_r: f64, delta_v: f64) -> Result<Vec<f64>> {
    let speed = theta0.v.norm();
    sites
        .iter()
        .enumerate()
        .map(|(i, site)| {
            let z = check_geometry(&theta0.r, site, i)?;
            let doppler = site.doppler_factor() * (z * delta_v + speed * delta_r + delta_r * delta_v) / z;
            Ok(delta_r * delta_r / (site.sigma_d * site.sigma_d)
                + 2.0 * site.kappa * delta_r / z
                + doppler * doppler / (site.sigma_f * site.sigma_f))
        })
        .collect()
}

/// `b_1, ..., b_n` over site prefixes.
pub fn compute_bn_prefixes(sites: &[RadarSite], theta0: &StateVector, delta: f64) -> Result<Vec<f64>> {
    compute_bn(sites, theta0, delta)?;
    let terms = bn_terms(sites, theta0, delta * POSITION_SCALE, delta * VELOCITY_SCALE)?;
    let mut acc = 0.0;
    Ok(terms
        .into_iter()
        .map(|t| {
            acc += t;
            0.5 * acc
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheckConfig {
    /// Ball radius in scaled units.
    pub rho: f64,
    /// Perturbation bound used for `b_n`, scaled units.
    pub delta: f64,
    pub num_mc_samples: usize,
    pub probe_states: Vec<StateVector>,
    pub num_probes_ball: usize,
    pub channels: ChannelMask,
}

impl AssumptionCheckConfig {
    pub fn new(probe_states: Vec<StateVector>) -> Self {
        Self {
            rho: 1e-3,
            delta: 1e-3,
            num_mc_samples: 20_000,
            probe_states,
            num_probes_ball: 64,
            channels: ChannelMask::ALL,
        }
    }

    pub fn ball(&self, bounds: &ParameterBounds) -> Result<BallSupConfig> {
        Ok(BallSupConfig::new(self.rho, self.num_probes_ball)?
            .with_bounds(*bounds)
            .with_channels(self.channels))
    }

    pub fn validate(&self, theta0: &StateVector, bounds: &ParameterBounds) -> Result<()> {
        self.validate_basic()?;
        for (k, p) in self.probe_states.iter().enumerate() {
            if !p.is_feasible(bounds) {
                return Err(invalid("probe_states", format!("probe {k} is infeasible")));
            }
            let dist = p.scaled_distance(theta0);
            if dist < 2.0 * self.rho {
                return Err(invalid(
                    "probe_states",
                    format!("probe {k} is {dist:e} from the true state, inside 2*rho = {:e}", 2.0 * self.rho),
                ));
            }
        }
        Ok(())
    }

    fn validate_basic(&self) -> Result<()> {
        BallSupConfig::new(self.rho, self.num_probes_ball)?;
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", format!("must be positive, got {}", self.delta)));
        }
        if self.num_mc_samples < 2 {
            return Err(invalid("num_mc_samples", "must be >= 2"));
        }
        if self.probe_states.is_empty() {
            return Err(Error::EmptyInput("no probe states"));
        }
        if !self.channels.any() {
            return Err(invalid("channels", "at least one channel must be enabled"));
        }
        Ok(())
    }
}

/// Monte Carlo statistics of `log g_i(X; theta, rho) - log g_i(X; theta0)` for one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRatioStats {
    pub probe: StateVector,
    pub per_site_mean: Vec<f64>,
    pub per_site_variance: Vec<f64>,
    pub cumulative_mean_over_bn: f64,
    pub b_n: f64,
    pub epsilon_margin: f64,
    /// Monte Carlo standard error of `cumulative_mean_over_bn`.
    pub std_err: f64,
}

impl LogRatioStats {
    pub fn passes(&self) -> bool {
        self.epsilon_margin > SIGNIFICANCE_SE * self.std_err
    }

    /// Standard error of the mean for site `i`.
    pub fn site_std_err(&self, i: usize, num_samples: usize) -> f64 {
        (self.per_site_variance[i] / num_samples as f64).sqrt()
    }
}

enum Scorer {
    Point(PredictedMeasurement),
    Ball(BallPredictions),
}

impl Scorer {
    fn score(&self, x: &MeasurementTuple, site: &RadarSite, channels: ChannelMask) -> f64 {
        match self {
            Scorer::Point(p) => log_density_predicted(x, p, site, channels),
            Scorer::Ball(b) => b.sup_log_density(x, site),
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Per-probe log-ratio statistics without the probe-distance check.
///
/// With `ball = None` the numerator is the plain density at the probe, which
/// is the `rho -> 0` limit. Draws for site `i` come from
/// `derive_stream(seed, MONTE_CARLO_BASE + i)` and are shared by all probes.
#[allow(clippy::too_many_arguments)]
pub fn log_ratio_stats(
    sites: &[RadarSite],
    theta0: &StateVector,
    probes: &[StateVector],
    ball: Option<&BallSupConfig>,
    channels: ChannelMask,
    num_samples: usize,
    seed: u64,
    delta: f64,
) -> Result<Vec<LogRatioStats>> {
    if sites.is_empty() {
        return Err(Error::EmptyInput("no sites"));
    }
    if num_samples < 2 {
        return Err(invalid("num_mc_samples", "must be >= 2"));
    }
    let b_n = compute_bn(sites, theta0, delta)?;

    let per_site: Vec<Vec<(f64, f64)>> = sites
        .par_iter()
        .enumerate()
        .map(|(i, site)| -> Result<Vec<(f64, f64)>> {
            let pred0 = predict(theta0, site).map_err(|e| e.at_site(i))?;
            let scorers = probes
                .iter()
                .map(|p| match ball {
                    Some(cfg) => BallPredictions::new(site, p, cfg).map(Scorer::Ball),
                    None => predict(p, site).map(Scorer::Point),
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.at_site(i))?;
            let mut acc = vec![Welford::default(); probes.len()];
            let mut stream = derive_stream(seed, stream_ids::MONTE_CARLO_BASE + i as u64);
            for _ in 0..num_samples {
                let x = simulate_tuple(theta0, site, &mut stream)?;
                let base = log_density_predicted(&x, &pred0, site, channels);
                for (a, s) in acc.iter_mut().zip(&scorers) {
                    a.push(s.score(&x, site, channels) - base);
                }
            }
            Ok(acc.iter().map(|w| (w.mean, w.variance())).collect())
        })
        .collect::<Result<_>>()?;

    Ok(probes
        .iter()
        .enumerate()
        .map(|(k, probe)| {
            let per_site_mean: Vec<f64> = per_site.iter().map(|s| s[k].0).collect();
            let per_site_variance: Vec<f64> = per_site.iter().map(|s| s[k].1).collect();
            let cumulative = per_site_mean.iter().sum::<f64>() / b_n;
            let std_err = (per_site_variance.iter().sum::<f64>() / num_samples as f64).sqrt() / b_n;
            LogRatioStats {
                probe: *probe,
                per_site_mean,
                per_site_variance,
                cumulative_mean_over_bn: cumulative,
                b_n,
                epsilon_margin: -cumulative,
                std_err,
            }
        })
        .collect())
}

/// Ball-supremum log-ratio statistics for every configured probe.
pub fn check_assumption_iv(scn: &Scenario, cfg: &AssumptionCheckConfig) -> Result<Vec<LogRatioStats>> {
    scn.validate()?;
    cfg.validate(&scn.truth, &scn.bounds)?;
    let ball = cfg.ball(&scn.bounds)?;
    log_ratio_stats(
        &scn.sites,
        &scn.truth,
        &cfg.probe_states,
        Some(&ball),
        cfg.channels,
        cfg.num_mc_samples,
        scn.seed,
        cfg.delta,
    )
}

/// Identifiability: the plain log-likelihood ratio at every probe has
/// negative mean, so probe and truth induce different distributions.
pub fn check_identifiability(scn: &Scenario, cfg: &AssumptionCheckConfig) -> Result<Vec<LogRatioStats>> {
    scn.validate()?;
    cfg.validate(&scn.truth, &scn.bounds)?;
    log_ratio_stats(
        &scn.sites,
        &scn.truth,
        &cfg.probe_states,
        None,
        cfg.channels,
        cfg.num_mc_samples,
        scn.seed,
        cfg.delta,
    )
}

/// Self-test of the ball supremum on simulated tuples: repeated evaluation is
/// bit-identical, the supremum dominates the centre density, and a larger
/// probe set never lowers it.
pub fn check_ball_sup_determinism(scn: &Scenario, cfg: &AssumptionCheckConfig) -> Result<bool> {
    scn.validate()?;
    cfg.validate_basic()?;
    let ball = cfg.ball(&scn.bounds)?;
    let bigger = BallSupConfig::new(cfg.rho, 2 * cfg.num_probes_ball)?
        .with_bounds(scn.bounds)
        .with_channels(cfg.channels);
    let mut stream = derive_stream(scn.seed, stream_ids::PROBES);
    for (i, site) in scn.sites.iter().enumerate() {
        let x = simulate_tuple(&scn.truth, site, &mut stream).map_err(|e| e.at_site(i))?;
        for theta in std::iter::once(&scn.truth).chain(&cfg.probe_states) {
            let a = BallPredictions::new(site, theta, &ball)?.sup_log_density(&x, site);
            let b = BallPredictions::new(site, theta, &ball)?.sup_log_density(&x, site);
            let centre = log_density_predicted(&x, &predict(theta, site)?, site, cfg.channels);
            let wide = BallPredictions::new(site, theta, &bigger)?.sup_log_density(&x, site);
            let tol = 1e-12 * centre.abs().max(1.0);
            if a.to_bits() != b.to_bits() || a < centre - tol || wide < a - tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionVReport {
    pub per_site_variance: Vec<f64>,
    pub b_prefix: Vec<f64>,
    /// `sum_{i <= n} var_i / b_i^2` for every `n`.
    pub partial_sums: Vec<f64>,
    /// Analytic ceiling `var_1 / b_1^2 + c / b_1`, `c = max_i var_i / (b_i - b_{i-1})`.
    pub bound: f64,
    pub bounded: bool,
}

/// Summability check of `var_i / b_i^2` for one set of log-ratio statistics.
///
/// Writing `c` for the largest ratio of a variance to its `b` increment, the
/// partial sums cannot exceed `var_1 / b_1^2 + c / b_1` because
/// `sum_{i >= 2} (b_i - b_{i-1}) / b_i^2 <= 1 / b_1` for any positive
/// non-decreasing sequence. The report is `bounded` when the partial sums
/// respect that ceiling and the terms in the last quarter of the sequence are
/// on average no larger than those in the first quarter.
pub fn assumption_v_report(
    sites: &[RadarSite],
    theta0: &StateVector,
    delta: f64,
    stats: &LogRatioStats,
) -> Result<AssumptionVReport> {
    let b_prefix = compute_bn_prefixes(sites, theta0, delta)?;
    let var = &stats.per_site_variance;
    if var.len() != b_prefix.len() {
        return Err(Error::LengthMismatch {
            sites: b_prefix.len(),
            measurements: var.len(),
        });
    }
    let terms: Vec<f64> = var.iter().zip(&b_prefix).map(|(v, b)| v / (b * b)).collect();
    let mut acc = 0.0;
    let partial_sums: Vec<f64> = terms
        .iter()
        .map(|t| {
            acc += t;
            acc
        })
        .collect();
    let mut c: f64 = 0.0;
    let mut prev = 0.0;
    for (v, b) in var.iter().zip(&b_prefix) {
        c = c.max(v / (b - prev));
        prev = *b;
    }
    let b1 = b_prefix[0];
    let bound = terms[0] + c / b1;
    let last = *partial_sums.last().expect("non-empty");
    let within = last <= bound * (1.0 + 1e-12);

    let n = terms.len();
    let shrinking = if n < 4 {
        true
    } else {
        let q = n / 4;
        let head = terms[..q].iter().sum::<f64>() / q as f64;
        let tail = terms[n - q..].iter().sum::<f64>() / q as f64;
        tail <= head
    };
    Ok(AssumptionVReport {
        per_site_variance: var.clone(),
        b_prefix,
        partial_sums,
        bound,
        bounded: within && shrinking,
    })
}

/// Variance summability for every configured probe.
pub fn check_assumption_v(scn: &Scenario, cfg: &AssumptionCheckConfig) -> Result<Vec<AssumptionVReport>> {
    check_assumption_iv(scn, cfg)?
        .iter()
        .map(|s| assumption_v_report(&scn.sites, &scn.truth, cfg.delta, s))
        .collect()
}

/// `count` feasible probes whose scaled distance from `theta0` lies in
/// `[min_dist, max_dist]` before projection. Probes that projection pulls
/// within `min_dist` of `theta0` are redrawn.
pub fn far_probes(
    theta0: &StateVector,
    bounds: &ParameterBounds,
    count: usize,
    min_dist: f64,
    max_dist: f64,
    stream: &mut RandomStream,
) -> Result<Vec<StateVector>> {
    if !(min_dist > 0.0 && max_dist >= min_dist) {
        return Err(invalid("far_probe_distance", format!("need 0 < min <= max, got [{min_dist}, {max_dist}]")));
    }
    let centre = theta0.to_scaled();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(invalid("far_probe_distance", "cannot place feasible probes at the requested distance"));
        }
        let g = Vector6::from_fn(|_, _| stream.sample::<f64, _>(StandardNormal));
        let Some(dir) = g.try_normalize(1e-300) else {
            continue;
        };
        let radius = min_dist + (max_dist - min_dist) * stream.random::<f64>();
        let p = project_to_feasible(&StateVector::from_scaled(&(centre + dir * radius)), bounds)?;
        if p.scaled_distance(theta0) >= min_dist {
            out.push(p);
        }
    }
    Ok(out)
}

/// First-order residuals of the unit-vector and projected-velocity
/// approximations, with a fitted log-log slope for each.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub scales: Vec<f64>,
    pub unit_vector_residuals: Vec<f64>,
    pub inner_product_residuals: Vec<f64>,
    pub unit_vector_slope: f64,
    pub inner_product_slope: f64,
    /// Unit-vector residuals for perturbations along `y`, which equal
    /// `scale / |y|` and are kept out of the fit.
    pub parallel_residuals: Vec<f64>,
    pub pass: bool,
}

/// Minimum log-log slope accepted for a second-order residual.
pub const MIN_RESIDUAL_SLOPE: f64 = 1.9;

/// `| (y + d)/|y + d| - y/|y| - d/|y| |`.
pub fn unit_vector_residual(y: &Vec3, delta: &Vec3) -> f64 {
    let x = y + delta;
    let yn = y.norm();
    (x / x.norm() - y / yn - delta / yn).norm()
}

/// Residual of `(y + d1)/|y + d1| . (v + d2) - y/|y| . v`
/// against `(y . d2 + d1 . d2 + v . d1) / |y|`.
pub fn inner_product_residual(y: &Vec3, v: &Vec3, delta1: &Vec3, delta2: &Vec3) -> f64 {
    let x = y + delta1;
    let yn = y.norm();
    let lhs = (x / x.norm()).dot(&(v + delta2)) - (y / yn).dot(v);
    let rhs = (y.dot(delta2) + delta1.dot(delta2) + v.dot(delta1)) / yn;
    (lhs - rhs).abs()
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Evaluates both residuals along fixed random directions at each absolute
/// perturbation length in `delta_scales`.
///
/// The position perturbation is orthogonal to `y` with length `s`; the
/// velocity perturbation has length `s |v0| / |y|` in a random direction.
pub fn check_lemma_approximations(y: &Vec3, v0: &Vec3, delta_scales: &[f64], seed: u64) -> Result<LemmaReport> {
    let yn = y.norm();
    if !(yn > 0.0 && yn.is_finite()) {
        return Err(Error::DegeneratePosition);
    }
    if delta_scales.len() < 2 {
        return Err(invalid("delta_scales", "need at least two scales"));
    }
    if delta_scales.windows(2).any(|w| w[1] >= w[0]) || delta_scales[0] > 0.1 * yn || delta_scales.iter().any(|s| *s <= 0.0) {
        return Err(invalid("delta_scales", "must be positive, strictly decreasing and at most 0.1 |y|"));
    }
    let mut stream = derive_stream(seed, stream_ids::LEMMA_DIRECTIONS);
    let mut gauss = || Vec3::from_fn(|_, _| stream.sample::<f64, _>(StandardNormal));
    let yhat = y / yn;
    let d1 = loop {
        let g = gauss();
        if let Some(d) = (g - yhat * yhat.dot(&g)).try_normalize(1e-12) {
            break d;
        }
    };
    let d2 = loop {
        if let Some(d) = gauss().try_normalize(1e-12) {
            break d;
        }
    };
    let speed_ratio = v0.norm() / yn;

    let unit_vector_residuals: Vec<f64> = delta_scales.iter().map(|s| unit_vector_residual(y, &(d1 * *s))).collect();
    let inner_product_residuals: Vec<f64> = delta_scales
        .iter()
        .map(|s| inner_product_residual(y, v0, &(d1 * *s), &(d2 * (*s * speed_ratio))))
        .collect();
    let parallel_residuals = delta_scales.iter().map(|s| unit_vector_residual(y, &(yhat * *s))).collect();

    let unit_vector_slope = log_log_slope(delta_scales, &unit_vector_residuals);
    let inner_product_slope = log_log_slope(delta_scales, &inner_product_residuals);
    Ok(LemmaReport {
        scales: delta_scales.to_vec(),
        unit_vector_residuals,
        inner_product_residuals,
        unit_vector_slope,
        inner_product_slope,
        parallel_residuals,
        pass: unit_vector_slope >= MIN_RESIDUAL_SLOPE && inner_product_slope >= MIN_RESIDUAL_SLOPE,
    })
}

/// Scenario family for the consistency sweep: each trial draws fresh sites
/// around the true position and fresh measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepTemplate {
    pub truth: StateVector,
    pub bounds: ParameterBounds,
    pub noise: SiteNoise,
    /// Use exact predictions instead of noisy draws.
    pub noiseless: bool,
    pub site_radius: f64,
    pub seed: u64,
}

impl SweepTemplate {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.noise.validate()?;
        if !self.truth.is_feasible(&self.bounds) {
            return Err(invalid("truth", "true state is outside the feasible set"));
        }
        if !(self.site_radius > 0.0 && self.site_radius.is_finite()) {
            return Err(invalid("site_radius", format!("must be positive, got {}", self.site_radius)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

impl Quantiles {
    /// Linear-interpolation sample quantiles; `NaN` for an empty sample.
    pub fn from_sample(mut xs: Vec<f64>) -> Self {
        xs.sort_by(f64::total_cmp);
        Self {
            q10: quantile_sorted(&xs, 0.1),
            q50: quantile_sorted(&xs, 0.5),
            q90: quantile_sorted(&xs, 0.9),
        }
    }
}

fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    match xs.len() {
        0 => f64::NAN,
        1 => xs[0],
        n => {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub radar_counts: Vec<usize>,
    pub error_quantiles_position: Vec<Quantiles>,
    pub error_quantiles_velocity: Vec<Quantiles>,
    pub trials: usize,
    /// Failed solves per radar count.
    pub failures: Vec<usize>,
}

impl ConsistencyReport {
    /// Median position error strictly decreasing across radar counts.
    pub fn median_position_decreasing(&self) -> bool {
        self.error_quantiles_position.windows(2).all(|w| w[1].q50 < w[0].q50)
    }
}

struct TrialOutcome {
    radar_count: usize,
    errors: Option<(f64, f64)>,
}

fn run_trial(template: &SweepTemplate, radar_count: usize, trial: usize, opts: &SolverOptions) -> TrialOutcome {
    let mut stream = derive_stream(template.seed, stream_ids::sweep_trial(radar_count, trial));
    let solved = (|| -> Result<Option<(f64, f64)>> {
        let sites = generate_sites(&template.truth.r, radar_count, template.site_radius, template.noise, &mut stream)?;
        let meas = if template.noiseless {
            noiseless_measurements(&template.truth, &sites)?
        } else {
            sites
                .iter()
                .map(|s| simulate_tuple(&template.truth, s, &mut stream))
                .collect::<Result<Vec<_>>>()?
        };
        let res = estimate(&sites, &meas, &template.bounds, opts, &mut stream)?;
        Ok(res.converged.then(|| {
            (
                (res.estimate.r - template.truth.r).norm(),
                (res.estimate.v - template.truth.v).norm(),
            )
        }))
    })();
    TrialOutcome {
        radar_count,
        errors: solved.ok().flatten(),
    }
}

/// Solves `trials` independent scenarios for each radar count and reports
/// error quantiles over the converged solves.
///
/// Trial `t` at count `N` uses the stream `sweep_trial(N, t)` for site
/// placement, noise and multi-start perturbations, so the report does not
/// depend on how trials are scheduled.
pub fn run_consistency_sweep(
    template: &SweepTemplate,
    radar_counts: &[usize],
    trials: usize,
    opts: &SolverOptions,
) -> Result<ConsistencyReport> {
    template.validate()?;
    opts.validate()?;
    if radar_counts.is_empty() {
        return Err(Error::EmptyInput("no radar counts"));
    }
    if radar_counts[0] == 0 || radar_counts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("radar_counts", "must be positive and strictly increasing"));
    }
    if trials == 0 {
        return Err(invalid("trials", "must be >= 1"));
    }
    let jobs: Vec<(usize, usize)> = radar_counts.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    let outcomes: Vec<TrialOutcome> = jobs.par_iter().map(|&(n, t)| run_trial(template, n, t, opts)).collect();

    let mut report = ConsistencyReport {
        radar_counts: radar_counts.to_vec(),
        error_quantiles_position: Vec::new(),
        error_quantiles_velocity: Vec::new(),
        trials,
        failures: Vec::new(),
    };
    for &n in radar_counts {
        let errs: Vec<(f64, f64)> = outcomes.iter().filter(|o| o.radar_count == n).filter_map(|o| o.errors).collect();
        let failures = trials - errs.len();
        if failures as f64 > MAX_SWEEP_FAILURE_RATE * trials as f64 {
            return Err(Error::SweepFailureRate {
                radar_count: n,
                failures,
                trials,
            });
        }
        report
            .error_quantiles_position
            .push(Quantiles::from_sample(errs.iter().map(|e| e.0).collect()));
        report
            .error_quantiles_velocity
            .push(Quantiles::from_sample(errs.iter().map(|e| e.1).collect()));
        report.failures.push(failures);
    }
    Ok(report)
}

/// The reference low-orbit state used by the default configuration.
pub fn default_truth() -> StateVector {
    StateVector {
        r: Vec3::new(6.878e6, 0.0, 0.0),
        v: Vec3::new(0.0, 6.0e3, 4.6e3),
    }
}

pub fn default_noise() -> SiteNoise {
    SiteNoise {
        sigma_d: 10.0,
        kappa: 1e4,
        sigma_f: 1.0,
        f_c: 1e9,
    }
}
