//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use orbit_mle::consistency::{default_noise, default_truth};
use orbit_mle::measurement::generate_sites;
use orbit_mle::rng::derive_stream;
use orbit_mle::{ParameterBounds, RadarSite, Scenario, SiteNoise, StateVector, Vec3};

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Integral of `exp(log_f)` over the unit sphere: Gauss–Legendre in
/// `cos(theta)` and the periodic trapezoid rule in azimuth.
pub fn sphere_integral(log_f: impl Fn(&Vec3) -> f64, n_polar: usize, n_azimuth: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n_polar);
    let mut total = 0.0;
    for (c, wc) in nodes.iter().zip(&weights) {
        let s = (1.0 - c * c).sqrt();
        let mut ring = 0.0;
        for k in 0..n_azimuth {
            let phi = 2.0 * PI * k as f64 / n_azimuth as f64;
            ring += log_f(&Vec3::new(s * phi.cos(), s * phi.sin(), *c)).exp();
        }
        total += wc * ring * 2.0 * PI / n_azimuth as f64;
    }
    total
}

/// Richardson-extrapolated central differences of `f` at `x` with per-coordinate
/// step `h[k]`.
pub fn fd_gradient(f: impl Fn(&[f64; 6]) -> f64, x: &[f64; 6], h: &[f64; 6]) -> [f64; 6] {
    let central = |k: usize, step: f64| {
        let mut xp = *x;
        let mut xm = *x;
        xp[k] += step;
        xm[k] -= step;
        (f(&xp) - f(&xm)) / (2.0 * step)
    };
    std::array::from_fn(|k| {
        let d1 = central(k, h[k]);
        let d2 = central(k, h[k] / 2.0);
        (4.0 * d2 - d1) / 3.0
    })
}

pub fn state_from(x: &[f64; 6]) -> StateVector {
    StateVector {
        r: Vec3::new(x[0], x[1], x[2]),
        v: Vec3::new(x[3], x[4], x[5]),
    }
}

pub fn sites_around(target: &Vec3, n: usize, noise: SiteNoise, seed: u64) -> Vec<RadarSite> {
    generate_sites(target, n, 6.371e6, noise, &mut derive_stream(seed, 0xABCD)).unwrap()
}

pub fn default_scenario(n: usize, seed: u64) -> Scenario {
    let truth = default_truth();
    Scenario::new(truth, sites_around(&truth.r, n, default_noise(), seed), ParameterBounds::default(), seed).unwrap()
}

/// Three radars on well-separated bearings from the default state.
pub fn three_radar_sites() -> Vec<RadarSite> {
    [[6.371e6, 0.0, 0.0], [6.2e6, 1.4e6, 0.3e6], [6.1e6, -0.5e6, 1.7e6]]
        .iter()
        .map(|p| RadarSite::new(Vec3::from(*p), default_noise()).unwrap())
        .collect()
}
