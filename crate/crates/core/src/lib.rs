//! Maximum-likelihood orbit determination from simultaneous range, bearing
//! and Doppler observations by N monostatic radars, together with a Monte
//! Carlo harness that checks the strong-consistency conditions of the
//! estimator empirically.
//!
//! Module map:
//!
//! - [`types`]: state vectors, bounds, radar sites, feasibility projection
//! - [`rng`]: deterministic per-purpose random streams
//! - [`vmf`]: von Mises–Fisher density, sampler and moments on S²
//! - [`measurement`]: predictions, noisy tuples, site layouts
//! - [`likelihood`]: objective, gradient, log-densities, ball supremum
//! - [`solver`]: projected Gauss–Newton descent with multi-start
//! - [`consistency`]: assumption checks and the radar-count sweep
//! - [`io`], [`config`], [`cli`]: file formats and the command-line surface

pub mod cli;
pub mod config;
pub mod consistency;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod measurement;
pub mod rng;
pub mod solver;
pub mod types;
pub mod vmf;

pub use error::{Error, Result};
pub use types::{MeasurementTuple, ParameterBounds, RadarSite, Scenario, SiteNoise, StateVector, Vec3};
