//! Domain records shared by every module: the estimand, parameter bounds,
//! radar sites, measurement tuples and scenarios.
//!
//! All quantities are SI. The scaled parameter space used by the ball,
//! perturbation and solver logic divides positions by [`POSITION_SCALE`] and
//! velocities by [`VELOCITY_SCALE`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{Vector3, Vector6};

use crate::error::{invalid, Error, Result};

pub type Vec3 = Vector3<f64>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;
/// Mean Earth radius, m.
pub const EARTH_RADIUS: f64 = 6.371e6;
/// Positions are divided by this length (m) in the scaled parameter space.
pub const POSITION_SCALE: f64 = 1.0e6;
/// Velocities are divided by this speed (m/s) in the scaled parameter space.
pub const VELOCITY_SCALE: f64 = 1.0e3;
/// Minimum admissible distance between the target and any radar, m.
pub const MIN_SITE_DISTANCE: f64 = 1.0e3;

/// Orbital state `(r, v)` in an Earth-centred Cartesian frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    pub r: Vec3,
    pub v: Vec3,
}

impl StateVector {
    pub fn new(r: Vec3, v: Vec3) -> Result<Self> {
        let s = Self { r, v };
        if !s.is_finite() {
            return Err(invalid("state", "components must be finite"));
        }
        Ok(s)
    }

    pub fn is_finite(&self) -> bool {
        self.r.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    /// Dimensionless coordinates `(r / L, v / V)`.
    pub fn to_scaled(&self) -> Vector6<f64> {
        let r = self.r / POSITION_SCALE;
        let v = self.v / VELOCITY_SCALE;
        Vector6::new(r.x, r.y, r.z, v.x, v.y, v.z)
    }

    pub fn from_scaled(x: &Vector6<f64>) -> Self {
        Self {
            r: Vec3::new(x[0], x[1], x[2]) * POSITION_SCALE,
            v: Vec3::new(x[3], x[4], x[5]) * VELOCITY_SCALE,
        }
    }

    /// Euclidean distance between two states in scaled units.
    pub fn scaled_distance(&self, other: &StateVector) -> f64 {
        (self.to_scaled() - other.to_scaled()).norm()
    }

    pub fn is_feasible(&self, bounds: &ParameterBounds) -> bool {
        let rn = self.r.norm();
        self.is_finite() && rn >= bounds.r_min && rn <= bounds.r_max && self.v.norm() <= bounds.v_max
    }
}

/// Compact parameter set: `r_min <= |r| <= r_max`, `|v| <= v_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterBounds {
    pub r_min: f64,
    pub r_max: f64,
    pub v_max: f64,
}

impl Default for ParameterBounds {
    fn default() -> Self {
        Self {
            r_min: 6.471e6,
            r_max: 5.0e7,
            v_max: 1.5e4,
        }
    }
}

impl ParameterBounds {
    pub fn new(r_min: f64, r_max: f64, v_max: f64) -> Result<Self> {
        let b = Self { r_min, r_max, v_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min >= EARTH_RADIUS) {
            return Err(invalid("r_min", format!("must be >= {EARTH_RADIUS} m, got {}", self.r_min)));
        }
        if !(self.r_max > self.r_min) || !self.r_max.is_finite() {
            return Err(invalid("r_max", format!("must be finite and > r_min, got {}", self.r_max)));
        }
        if !(self.v_max > 0.0 && self.v_max <= SPEED_OF_LIGHT) {
            return Err(invalid("v_max", format!("must lie in (0, c], got {}", self.v_max)));
        }
        Ok(())
    }
}

/// Per-radar noise and carrier parameters, without a position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteNoise {
    pub sigma_d: f64,
    pub kappa: f64,
    pub sigma_f: f64,
    pub f_c: f64,
}

impl SiteNoise {
    pub fn validate(&self) -> Result<()> {
        positive("sigma_d", self.sigma_d)?;
        positive("kappa", self.kappa)?;
        if self.kappa > crate::vmf::MAX_KAPPA {
            return Err(invalid("kappa", format!("must be <= {:e}, got {}", crate::vmf::MAX_KAPPA, self.kappa)));
        }
        positive("sigma_f", self.sigma_f)?;
        positive("f_c", self.f_c)
    }
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {x}")))
    }
}

/// One monostatic radar: position plus noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarSite {
    pub s: Vec3,
    pub sigma_d: f64,
    pub kappa: f64,
    pub sigma_f: f64,
    pub f_c: f64,
}

impl RadarSite {
    pub fn new(s: Vec3, noise: SiteNoise) -> Result<Self> {
        let site = Self::with_noise(s, noise);
        site.validate()?;
        Ok(site)
    }

    pub(crate) fn with_noise(s: Vec3, noise: SiteNoise) -> Self {
        Self {
            s,
            sigma_d: noise.sigma_d,
            kappa: noise.kappa,
            sigma_f: noise.sigma_f,
            f_c: noise.f_c,
        }
    }

    pub fn noise(&self) -> SiteNoise {
        SiteNoise {
            sigma_d: self.sigma_d,
            kappa: self.kappa,
            sigma_f: self.sigma_f,
            f_c: self.f_c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s.iter().all(|x| x.is_finite()) {
            return Err(invalid("s", "site position must be finite"));
        }
        self.noise().validate()
    }

    /// Doppler scale factor `2 f_c / c`, Hz per m/s.
    pub fn doppler_factor(&self) -> f64 {
        2.0 * self.f_c / SPEED_OF_LIGHT
    }
}

/// One radar's observation `(d, u, f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementTuple {
    pub d: f64,
    pub u: Vec3,
    pub f: f64,
}

impl MeasurementTuple {
    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.f.is_finite() && self.u.iter().all(|x| x.is_finite())) {
            return Err(invalid("measurement", "components must be finite"));
        }
        if (self.u.norm() - 1.0).abs() > 1e-12 {
            return Err(invalid("u", format!("direction must be unit norm, |u| = {}", self.u.norm())));
        }
        Ok(())
    }
}

/// A ground-truth state observed by a set of radars.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: StateVector,
    pub sites: Vec<RadarSite>,
    pub bounds: ParameterBounds,
    pub seed: u64,
}

impl Scenario {
    pub fn new(truth: StateVector, sites: Vec<RadarSite>, bounds: ParameterBounds, seed: u64) -> Result<Self> {
        let scn = Self { truth, sites, bounds, seed };
        scn.validate()?;
        Ok(scn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::EmptyInput("scenario has no sites"));
        }
        if !self.truth.is_finite() {
            return Err(invalid("truth", "components must be finite"));
        }
        self.bounds.validate()?;
        for (i, site) in self.sites.iter().enumerate() {
            site.validate()?;
            check_geometry(&self.truth.r, site, i)?;
        }
        Ok(())
    }
}

pub(crate) fn check_geometry(r: &Vec3, site: &RadarSite, index: usize) -> Result<f64> {
    let distance = (r - site.s).norm();
    if !(distance >= MIN_SITE_DISTANCE) {
        return Err(Error::SingularGeometry {
            site: index,
            distance,
            min: MIN_SITE_DISTANCE,
        });
    }
    Ok(distance)
}

/// Projects a state onto the feasible set: radial clamp of the position to
/// `[r_min, r_max]` and a speed clamp to `v_max`, directions preserved.
///
/// Feasible inputs are returned bit-for-bit, so the map is idempotent.
pub fn project_to_feasible(theta: &StateVector, bounds: &ParameterBounds) -> Result<StateVector> {
    if !theta.is_finite() {
        return Err(invalid("theta", "components must be finite"));
    }
    let rn = theta.r.norm();
    if rn == 0.0 {
        return Err(Error::DegeneratePosition);
    }
    let mut r = theta.r;
    if rn < bounds.r_min {
        r *= bounds.r_min / rn;
        // rounding can leave the norm one ulp short of the bound
        while r.norm() < bounds.r_min {
            r *= 1.0 + f64::EPSILON;
        }
    } else if rn > bounds.r_max {
        r *= bounds.r_max / rn;
        while r.norm() > bounds.r_max {
            r *= 1.0 - f64::EPSILON;
        }
    }
    let mut v = theta.v;
    let vn = v.norm();
    if vn > bounds.v_max {
        v *= bounds.v_max / vn;
        while v.norm() > bounds.v_max {
            v *= 1.0 - f64::EPSILON;
        }
    }
    Ok(StateVector { r, v })
}
