//! Negative log-likelihood objective for joint range, bearing and Doppler
//! observations, its analytic gradient, per-tuple log-densities, and the
//! ball supremum used by the consistency checks.
//!
//! The objective is
//!
//! ```text
//! F(r, v) = sum_i (|r - s_i| - d_i)^2 / (2 sd_i^2)
//!         - sum_i k_i u_i . (r - s_i) / |r - s_i|
//!         + sum_i (M_i u_hat_i . v - f_i)^2 / (2 sf_i^2),   M_i = 2 fc_i / c
//! ```
//!
//! which equals `-sum_i log g_i(x_i; theta)` up to an additive constant.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector6};

use crate::error::{invalid, Error, Result};
use crate::measurement::{predict, PredictedMeasurement};
use crate::types::{project_to_feasible, MeasurementTuple, ParameterBounds, RadarSite, StateVector, Vec3};
use crate::vmf::log_normalizer;

/// Selects which measurement channels contribute to objective and densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelMask {
    pub range: bool,
    pub angle: bool,
    pub doppler: bool,
}

impl ChannelMask {
    pub const ALL: Self = Self {
        range: true,
        angle: true,
        doppler: true,
    };
    pub const RANGE_ONLY: Self = Self {
        range: true,
        angle: false,
        doppler: false,
    };

    pub fn any(&self) -> bool {
        self.range || self.angle || self.doppler
    }
}

impl Default for ChannelMask {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    pub range_term: f64,
    pub angle_term: f64,
    pub doppler_term: f64,
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        for x in iter {
            k.add(x);
        }
        k
    }
}

fn check_lengths(sites: &[RadarSite], meas: &[MeasurementTuple]) -> Result<()> {
    if sites.len() != meas.len() {
        return Err(Error::LengthMismatch {
            sites: sites.len(),
            measurements: meas.len(),
        });
    }
    if sites.is_empty() {
        return Err(Error::EmptyInput("no measurements"));
    }
    Ok(())
}

fn predictions(theta: &StateVector, sites: &[RadarSite]) -> Result<Vec<PredictedMeasurement>> {
    sites
        .iter()
        .enumerate()
        .map(|(i, s)| predict(theta, s).map_err(|e| e.at_site(i)))
        .collect()
}

pub fn objective(theta: &StateVector, sites: &[RadarSite], meas: &[MeasurementTuple]) -> Result<ObjectiveBreakdown> {
    objective_with(theta, sites, meas, ChannelMask::ALL)
}

pub fn objective_with(
    theta: &StateVector,
    sites: &[RadarSite],
    meas: &[MeasurementTuple],
    channels: ChannelMask,
) -> Result<ObjectiveBreakdown> {
    check_lengths(sites, meas)?;
    let preds = predictions(theta, sites)?;
    let mut range = KahanSum::default();
    let mut angle = KahanSum::default();
    let mut doppler = KahanSum::default();
    for ((site, m), p) in sites.iter().zip(meas).zip(&preds) {
        if channels.range {
            let e = p.d_pred - m.d;
            range.add(e * e / (2.0 * site.sigma_d * site.sigma_d));
        }
        if channels.angle {
            angle.add(-site.kappa * m.u.dot(&p.u_pred));
        }
        if channels.doppler {
            let e = p.f_pred - m.f;
            doppler.add(e * e / (2.0 * site.sigma_f * site.sigma_f));
        }
    }
    let (range_term, angle_term, doppler_term) = (range.value(), angle.value(), doppler.value());
    Ok(ObjectiveBreakdown {
        total: range_term + angle_term + doppler_term,
        range_term,
        angle_term,
        doppler_term,
    })
}

/// Analytic gradient of the total objective, ordered `(d/dr, d/dv)` in SI units.
pub fn gradient(theta: &StateVector, sites: &[RadarSite], meas: &[MeasurementTuple]) -> Result<Vector6<f64>> {
    gradient_with(theta, sites, meas, ChannelMask::ALL)
}

pub fn gradient_with(
    theta: &StateVector,
    sites: &[RadarSite],
    meas: &[MeasurementTuple],
    channels: ChannelMask,
) -> Result<Vector6<f64>> {
    Ok(gauss_newton_system(theta, sites, meas, channels)?.1)
}

/// Gauss–Newton normal matrix `J^T J` and gradient `J^T res` in SI units.
///
/// The bearing term is treated as the residual `sqrt(k) (u_hat - u)`, whose
/// half squared norm equals `k - k u . u_hat` for unit vectors, so the
/// objective is a sum of squares up to the constant `-sum k_i`.
pub fn gauss_newton_system(
    theta: &StateVector,
    sites: &[RadarSite],
    meas: &[MeasurementTuple],
    channels: ChannelMask,
) -> Result<(Matrix6<f64>, Vector6<f64>)> {
    check_lengths(sites, meas)?;
    let mut h_rr = Matrix3::zeros();
    let mut h_rv = Matrix3::zeros();
    let mut h_vv = Matrix3::zeros();
    let mut g_r = Vec3::zeros();
    let mut g_v = Vec3::zeros();
    for (i, (site, m)) in sites.iter().zip(meas).enumerate() {
        let p = predict(theta, site).map_err(|e| e.at_site(i))?;
        let u = p.u_pred;
        // d(u_hat)/dr = (I - u u^T) / |r - s|
        let proj = (Matrix3::identity() - u * u.transpose()) / p.d_pred;
        if channels.range {
            let w = 1.0 / (site.sigma_d * site.sigma_d);
            g_r += u * ((p.d_pred - m.d) * w);
            h_rr += u * u.transpose() * w;
        }
        if channels.angle {
            g_r -= proj * m.u * site.kappa;
            h_rr += proj * proj * site.kappa;
        }
        if channels.doppler {
            let w = 1.0 / (site.sigma_f * site.sigma_f);
            let mf = site.doppler_factor();
            let jr = proj * theta.v * mf;
            let jv = u * mf;
            let e = p.f_pred - m.f;
            g_r += jr * (e * w);
            g_v += jv * (e * w);
            h_rr += jr * jr.transpose() * w;
            h_rv += jr * jv.transpose() * w;
            h_vv += jv * jv.transpose() * w;
        }
    }
    let mut h = Matrix6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&h_rr);
    h.fixed_view_mut::<3, 3>(0, 3).copy_from(&h_rv);
    h.fixed_view_mut::<3, 3>(3, 0).copy_from(&h_rv.transpose());
    h.fixed_view_mut::<3, 3>(3, 3).copy_from(&h_vv);
    let g = Vector6::new(g_r.x, g_r.y, g_r.z, g_v.x, g_v.y, g_v.z);
    Ok((h, g))
}

/// Log-density of one tuple given the noise-free prediction it is scored against.
pub fn log_density_predicted(x: &MeasurementTuple, pred: &PredictedMeasurement, site: &RadarSite, channels: ChannelMask) -> f64 {
    log_density_kernel(x, pred, site, channels) + log_density_constant(site, channels)
}

/// Parameter-dependent part of [`log_density_predicted`].
fn log_density_kernel(x: &MeasurementTuple, pred: &PredictedMeasurement, site: &RadarSite, channels: ChannelMask) -> f64 {
    let mut total = 0.0;
    if channels.range {
        let e = x.d - pred.d_pred;
        total -= e * e / (2.0 * site.sigma_d * site.sigma_d);
    }
    if channels.angle {
        total += site.kappa * x.u.dot(&pred.u_pred);
    }
    if channels.doppler {
        let e = x.f - pred.f_pred;
        total -= e * e / (2.0 * site.sigma_f * site.sigma_f);
    }
    total
}

fn log_density_constant(site: &RadarSite, channels: ChannelMask) -> f64 {
    let mut c = 0.0;
    if channels.range {
        c += gaussian_log_density(0.0, site.sigma_d);
    }
    if channels.angle {
        c += log_normalizer(site.kappa);
    }
    if channels.doppler {
        c += gaussian_log_density(0.0, site.sigma_f);
    }
    c
}

fn gaussian_log_density(residual: f64, sigma: f64) -> f64 {
    -0.5 * (2.0 * PI * sigma * sigma).ln() - residual * residual / (2.0 * sigma * sigma)
}

/// `log g_i(x; theta)`: Gaussian range, VMF bearing and Gaussian Doppler.
pub fn log_density_tuple(x: &MeasurementTuple, site: &RadarSite, theta: &StateVector) -> Result<f64> {
    log_density_tuple_with(x, site, theta, ChannelMask::ALL)
}

pub fn log_density_tuple_with(x: &MeasurementTuple, site: &RadarSite, theta: &StateVector, channels: ChannelMask) -> Result<f64> {
    let pred = predict(theta, site)?;
    Ok(log_density_predicted(x, &pred, site, channels))
}

/// Probe layout for the lower approximation of `sup { g(x; theta') : |theta' - theta| < rho }`.
///
/// Distances are measured in the scaled parameter space. Probe offsets are the
/// leading terms of a fixed 7-dimensional Kronecker sequence, so a larger
/// `num_probes` always extends the smaller probe set.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSupConfig {
    rho: f64,
    offsets: Vec<Vector6<f64>>,
    pub bounds: ParameterBounds,
    pub channels: ChannelMask,
}

/// Upper limit on the ball radius in scaled units.
pub const MAX_BALL_RADIUS: f64 = 0.1;
pub const MIN_BALL_PROBES: usize = 8;

impl BallSupConfig {
    pub fn new(rho: f64, num_probes: usize) -> Result<Self> {
        if !(rho > 0.0 && rho <= MAX_BALL_RADIUS) {
            return Err(invalid("rho", format!("must lie in (0, {MAX_BALL_RADIUS}], got {rho}")));
        }
        if num_probes < MIN_BALL_PROBES {
            return Err(invalid("num_probes", format!("must be >= {MIN_BALL_PROBES}, got {num_probes}")));
        }
        Ok(Self {
            rho,
            offsets: unit_ball_offsets(num_probes),
            bounds: ParameterBounds::default(),
            channels: ChannelMask::ALL,
        })
    }

    pub fn with_bounds(mut self, bounds: ParameterBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_channels(mut self, channels: ChannelMask) -> Self {
        self.channels = channels;
        self
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn num_probes(&self) -> usize {
        self.offsets.len()
    }

    /// Feasible probe states around `theta`, centre first.
    pub fn probe_states(&self, theta: &StateVector) -> Result<Vec<StateVector>> {
        let centre = theta.to_scaled();
        let mut states = Vec::with_capacity(self.offsets.len() + 1);
        states.push(*theta);
        for off in &self.offsets {
            let s = StateVector::from_scaled(&(centre + off * self.rho));
            states.push(project_to_feasible(&s, &self.bounds)?);
        }
        Ok(states)
    }
}

/// Points strictly inside the 6-dimensional unit ball.
fn unit_ball_offsets(n: usize) -> Vec<Vector6<f64>> {
    // generalised golden ratio: positive root of x^8 = x + 1
    let mut phi = 1.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / 8.0);
    }
    let alpha: [f64; 7] = std::array::from_fn(|j| (1.0 / phi.powi(j as i32 + 1)).fract());
    (1..=n)
        .map(|k| {
            let c: [f64; 7] = std::array::from_fn(|j| (0.5 + k as f64 * alpha[j]).fract());
            // Box–Muller on three coordinate pairs gives an isotropic direction
            let mut g = Vector6::zeros();
            for p in 0..3 {
                let rad = (-2.0 * (1.0 - c[2 * p]).ln()).sqrt();
                let ang = 2.0 * PI * c[2 * p + 1];
                g[2 * p] = rad * ang.cos();
                g[2 * p + 1] = rad * ang.sin();
            }
            let dir = g.try_normalize(1e-300).unwrap_or_else(|| Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
            dir * c[6].powf(1.0 / 6.0)
        })
        .collect()
}

/// Noise-free predictions at every probe state of the ball around `theta`,
/// reusable across many observations of the same site.
#[derive(Debug, Clone)]
pub struct BallPredictions {
    preds: Vec<PredictedMeasurement>,
    channels: ChannelMask,
}

impl BallPredictions {
    pub fn new(site: &RadarSite, theta: &StateVector, cfg: &BallSupConfig) -> Result<Self> {
        let centre = predict(theta, site)?;
        let mut preds = vec![centre];
        for s in cfg.probe_states(theta)?.iter().skip(1) {
            // probes too close to the radar carry no finite density; skip them
            if let Ok(p) = predict(s, site) {
                preds.push(p);
            }
        }
        Ok(Self {
            preds,
            channels: cfg.channels,
        })
    }

    pub fn sup_log_density(&self, x: &MeasurementTuple, site: &RadarSite) -> f64 {
        let best = self
            .preds
            .iter()
            .map(|p| log_density_kernel(x, p, site, self.channels))
            .fold(f64::NEG_INFINITY, f64::max);
        best + log_density_constant(site, self.channels)
    }

    /// Number of probe predictions actually used (centre included).
    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }
}

/// Lower approximation of `log g_i(x; theta, rho)`: the maximum of the tuple
/// log-density over `theta` and the configured probes of the `rho` ball.
pub fn sup_log_density_ball(x: &MeasurementTuple, site: &RadarSite, theta: &StateVector, cfg: &BallSupConfig) -> Result<f64> {
    Ok(BallPredictions::new(site, theta, cfg)?.sup_log_density(x, site))
}

/// `log g_i(x; theta, rho) - log g_i(x; theta0)`.
pub fn log_ratio_term(
    x: &MeasurementTuple,
    site: &RadarSite,
    theta: &StateVector,
    theta0: &StateVector,
    cfg: &BallSupConfig,
) -> Result<f64> {
    let sup = sup_log_density_ball(x, site, theta, cfg)?;
    Ok(sup - log_density_tuple_with(x, site, theta0, cfg.channels)?)
}
