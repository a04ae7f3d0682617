//! Forward measurement synthesis: exact predictions and noisy draws for the
//! range, bearing and Doppler channels of each radar.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_stream, RandomStream};
use crate::types::{check_geometry, MeasurementTuple, RadarSite, Scenario, SiteNoise, StateVector, Vec3};
use crate::vmf::{vmf_sample, VmfParams};

/// Consecutive non-positive range draws tolerated before giving up.
pub const MAX_RANGE_REDRAWS: usize = 100;

/// Noise-free range, line-of-sight direction and Doppler shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedMeasurement {
    pub d_pred: f64,
    pub u_pred: Vec3,
    pub f_pred: f64,
}

impl From<PredictedMeasurement> for MeasurementTuple {
    fn from(p: PredictedMeasurement) -> Self {
        MeasurementTuple {
            d: p.d_pred,
            u: p.u_pred,
            f: p.f_pred,
        }
    }
}

pub fn predict(state: &StateVector, site: &RadarSite) -> Result<PredictedMeasurement> {
    let d_pred = check_geometry(&state.r, site, 0)?;
    let u_pred = (state.r - site.s) / d_pred;
    Ok(PredictedMeasurement {
        d_pred,
        u_pred,
        f_pred: site.doppler_factor() * u_pred.dot(&state.v),
    })
}

/// One noisy observation: Gaussian range and Doppler noise, bearing drawn
/// from a VMF centred on the true line of sight. Non-positive ranges are
/// redrawn.
///
/// Draw order on the stream: range normal(s), two VMF uniforms, Doppler normal.
pub fn simulate_tuple(state: &StateVector, site: &RadarSite, stream: &mut RandomStream) -> Result<MeasurementTuple> {
    let pred = predict(state, site)?;
    let d = positive_range(pred.d_pred, site.sigma_d, || stream.sample(StandardNormal))?;
    let u = vmf_sample(&VmfParams::new(pred.u_pred, site.kappa)?, stream);
    let z: f64 = stream.sample(StandardNormal);
    Ok(MeasurementTuple {
        d,
        u,
        f: pred.f_pred + site.sigma_f * z,
    })
}

fn positive_range(d_pred: f64, sigma_d: f64, mut standard_normal: impl FnMut() -> f64) -> Result<f64> {
    let mut retries = 0;
    loop {
        let d = d_pred + sigma_d * standard_normal();
        if d > 0.0 {
            return Ok(d);
        }
        retries += 1;
        if retries > MAX_RANGE_REDRAWS {
            return Err(Error::ImplausibleNoise { retries });
        }
    }
}

/// One tuple per site; site `i` draws from `derive_stream(seed, i)`.
pub fn simulate_scenario(scn: &Scenario) -> Result<Vec<MeasurementTuple>> {
    scn.validate()?;
    scn.sites
        .iter()
        .enumerate()
        .map(|(i, site)| {
            let mut stream = derive_stream(scn.seed, i as u64);
            simulate_tuple(&scn.truth, site, &mut stream).map_err(|e| e.at_site(i))
        })
        .collect()
}

/// Exact predictions for every site, returned as measurement tuples.
pub fn noiseless_measurements(state: &StateVector, sites: &[RadarSite]) -> Result<Vec<MeasurementTuple>> {
    sites
        .iter()
        .enumerate()
        .map(|(i, site)| predict(state, site).map(Into::into).map_err(|e| e.at_site(i)))
        .collect()
}

/// Places `count` radars uniformly on the sphere of radius `radius`,
/// restricted to the hemisphere centred on the direction of `target`.
///
/// Points drawn in the far hemisphere are reflected through the plane
/// orthogonal to `target`, which keeps the distribution uniform.
pub fn generate_sites<R: Rng + ?Sized>(
    target: &Vec3,
    count: usize,
    radius: f64,
    noise: SiteNoise,
    rng: &mut R,
) -> Result<Vec<RadarSite>> {
    noise.validate()?;
    if count == 0 {
        return Err(Error::EmptyInput("site count must be positive"));
    }
    let axis = target.try_normalize(0.0).ok_or(Error::DegeneratePosition)?;
    let mut sites = Vec::with_capacity(count);
    while sites.len() < count {
        let g = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let Some(mut p) = g.try_normalize(1e-300) else {
            continue;
        };
        let h = p.dot(&axis);
        if h < 0.0 {
            p -= axis * (2.0 * h);
        }
        sites.push(RadarSite::with_noise(p * radius, noise));
    }
    Ok(sites)
}
