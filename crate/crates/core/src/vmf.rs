//! von Mises–Fisher distribution on the unit sphere S².

use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::types::Vec3;

/// Largest concentration accepted by [`VmfParams`].
pub const MAX_KAPPA: f64 = 1.0e6;

const POLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmfParams {
    mu: Vec3,
    kappa: f64,
}

impl VmfParams {
    pub fn new(mu: Vec3, kappa: f64) -> Result<Self> {
        if !mu.iter().all(|x| x.is_finite()) || (mu.norm() - 1.0).abs() > 1e-12 {
            return Err(invalid("mu", format!("mean direction must be unit norm, |mu| = {}", mu.norm())));
        }
        if !(kappa > 0.0 && kappa <= MAX_KAPPA) {
            return Err(invalid("kappa", format!("must lie in (0, {MAX_KAPPA:e}], got {kappa}")));
        }
        Ok(Self { mu, kappa })
    }

    pub fn mu(&self) -> Vec3 {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// `log(sinh(k))` for `k > 0`, stable for large `k`.
pub fn log_sinh(kappa: f64) -> f64 {
    kappa + (-(-2.0 * kappa).exp_m1() / 2.0).ln()
}

/// `log(k / (4 pi sinh k))`, the log normaliser of the density.
pub fn log_normalizer(kappa: f64) -> f64 {
    kappa.ln() - (4.0 * PI).ln() - log_sinh(kappa)
}

pub fn vmf_log_density(u: &Vec3, p: &VmfParams) -> f64 {
    p.kappa * u.dot(&p.mu) + log_normalizer(p.kappa)
}

/// Rotation taking the pole `(0, 0, 1)` to `mu` (Rodrigues about `pole x mu`).
pub fn pole_rotation(mu: &Vec3) -> Matrix3<f64> {
    let c = mu.z;
    if (mu - Vec3::z()).norm() <= POLE_TOLERANCE {
        return Matrix3::identity();
    }
    if (mu + Vec3::z()).norm() <= POLE_TOLERANCE {
        return Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
    }
    let k = Vec3::z().cross(mu);
    let kx = k.cross_matrix();
    Matrix3::identity() + kx + kx * kx / (1.0 + c)
}

/// Draws one sample given the two uniforms of the construction:
/// `xi` in `(0, 1]` selects the polar cosine by inverse CDF and `azimuth_unit`
/// in `[0, 1)` the azimuth as a fraction of a turn.
pub fn vmf_sample_from_uniforms(p: &VmfParams, xi: f64, azimuth_unit: f64) -> Vec3 {
    let k = p.kappa;
    // w = 1 + ln(xi + (1 - xi) e^{-2k}) / k, written with expm1/ln1p
    let w = (1.0 + ((1.0 - xi) * (-2.0 * k).exp_m1()).ln_1p() / k).clamp(-1.0, 1.0);
    let phi = 2.0 * PI * azimuth_unit;
    let s = (1.0 - w * w).max(0.0).sqrt();
    let rot = pole_rotation(&p.mu);
    let e1 = rot.column(0).into_owned();
    let e2 = rot.column(1).into_owned();
    // w * mu directly rather than rot * e_z, so xi = 1 reproduces mu exactly
    p.mu * w + (e1 * phi.cos() + e2 * phi.sin()) * s
}

pub fn vmf_sample<R: Rng + ?Sized>(p: &VmfParams, rng: &mut R) -> Vec3 {
    let xi = 1.0 - rng.random::<f64>();
    let az = rng.random::<f64>();
    vmf_sample_from_uniforms(p, xi, az)
}

/// Mean resultant length `coth(k) - 1/k`, so that `E[U] = A(k) mu`.
pub fn vmf_mean_resultant(kappa: f64) -> f64 {
    if kappa < 1e-3 {
        kappa / 3.0 - kappa.powi(3) / 45.0
    } else {
        1.0 / kappa.tanh() - 1.0 / kappa
    }
}

/// Loewner upper bound `I + mu mu^T` on the covariance of `U`.
pub fn vmf_covariance_bound(p: &VmfParams) -> Matrix3<f64> {
    Matrix3::identity() + p.mu * p.mu.transpose()
}
