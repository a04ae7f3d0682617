//! TOML run configuration shared by every CLI command.
//!
//! ```toml
//! seed = 42
//! output_dir = "output"
//!
//! [scenario]
//! noiseless = false
//! truth = { r = [6.878e6, 0.0, 0.0], v = [0.0, 6.0e3, 4.6e3] }
//! bounds = { r_min = 6.471e6, r_max = 5.0e7, v_max = 1.5e4 }
//!
//! [scenario.sites]          # generated layout; or list [[scenario.site]] entries
//! count = 8
//! radius = 6.371e6
//! sigma_d = 10.0
//! kappa = 1.0e4
//! sigma_f = 1.0
//! f_c = 1.0e9
//!
//! [solver]
//! max_iterations = 500
//!
//! [assumptions]
//! rho = 1.0e-3
//! num_far_probes = 20
//!
//! [sweep]
//! radar_counts = [4, 16, 64, 256]
//! trials = 100
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

use crate::consistency::{default_noise, default_truth, far_probes, AssumptionCheckConfig, SweepTemplate};
use crate::error::Error;
use crate::likelihood::ChannelMask;
use crate::measurement::generate_sites;
use crate::rng::{derive_stream, stream_ids};
use crate::solver::SolverOptions;
use crate::types::{ParameterBounds, RadarSite, Scenario, SiteNoise, StateVector, Vec3, EARTH_RADIUS};

/// A configuration problem, located by key path and, when known, line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ", key `{key}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    assumptions: RawAssumptions,
    #[serde(default)]
    sweep: RawSweep,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    noiseless: bool,
    truth: Option<RawState>,
    bounds: Option<RawBounds>,
    sites: Option<RawGenerated>,
    site: Option<Vec<RawSite>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    r: [f64; 3],
    v: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    r_min: Option<f64>,
    r_max: Option<f64>,
    v_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerated {
    count: Option<usize>,
    radius: Option<f64>,
    sigma_d: Option<f64>,
    kappa: Option<f64>,
    sigma_f: Option<f64>,
    f_c: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSite {
    position: [f64; 3],
    sigma_d: f64,
    kappa: f64,
    sigma_f: f64,
    f_c: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    max_iterations: Option<usize>,
    gradient_tolerance: Option<f64>,
    step_tolerance: Option<f64>,
    num_starts: Option<usize>,
    armijo_c: Option<f64>,
    backtrack_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAssumptions {
    rho: Option<f64>,
    delta: Option<f64>,
    num_mc_samples: Option<usize>,
    num_probes_ball: Option<usize>,
    num_far_probes: Option<usize>,
    far_probe_min: Option<f64>,
    far_probe_max: Option<f64>,
    probes: Option<Vec<RawState>>,
    channels: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    radar_counts: Option<Vec<usize>>,
    trials: Option<usize>,
}

/// Radar layout: drawn on a sphere around the target, or listed explicitly.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteSpec {
    Generated { count: usize, radius: f64, noise: SiteNoise },
    Explicit(Vec<RadarSite>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionSettings {
    pub rho: f64,
    pub delta: f64,
    pub num_mc_samples: usize,
    pub num_probes_ball: usize,
    pub num_far_probes: usize,
    pub far_probe_min: f64,
    pub far_probe_max: f64,
    pub probes: Option<Vec<StateVector>>,
    pub channels: ChannelMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub noiseless: bool,
    pub truth: StateVector,
    pub bounds: ParameterBounds,
    pub sites: SiteSpec,
    pub solver: SolverOptions,
    pub assumptions: AssumptionSettings,
    pub radar_counts: Vec<usize>,
    pub trials: usize,
}

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            key: None,
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        let locate = |key: &str, message: String| ConfigError {
            key: Some(key.to_string()),
            line: find_key_line(text, key),
            message,
        };
        let lib = |prefix: &str, e: Error| match e {
            Error::InvalidParameter { name, reason } => locate(&format!("{prefix}.{name}"), reason),
            other => locate(prefix, other.to_string()),
        };

        let truth = match raw.scenario.truth {
            Some(t) => StateVector::new(Vec3::from(t.r), Vec3::from(t.v)).map_err(|e| lib("scenario.truth", e))?,
            None => default_truth(),
        };
        let bounds = {
            let d = ParameterBounds::default();
            let b = raw.scenario.bounds.as_ref();
            ParameterBounds {
                r_min: b.and_then(|b| b.r_min).unwrap_or(d.r_min),
                r_max: b.and_then(|b| b.r_max).unwrap_or(d.r_max),
                v_max: b.and_then(|b| b.v_max).unwrap_or(d.v_max),
            }
        };
        bounds.validate().map_err(|e| lib("scenario.bounds", e))?;
        if !truth.is_feasible(&bounds) {
            return Err(locate("scenario.truth", "true state lies outside the feasible set".into()));
        }

        let sites = match (raw.scenario.sites, raw.scenario.site) {
            (Some(_), Some(_)) => {
                return Err(locate(
                    "scenario.site",
                    "give either [scenario.sites] or [[scenario.site]] entries, not both".into(),
                ))
            }
            (_, Some(list)) => {
                if list.is_empty() {
                    return Err(locate("scenario.site", "site list is empty".into()));
                }
                let sites = list
                    .iter()
                    .map(|s| {
                        RadarSite::new(
                            Vec3::from(s.position),
                            SiteNoise {
                                sigma_d: s.sigma_d,
                                kappa: s.kappa,
                                sigma_f: s.sigma_f,
                                f_c: s.f_c,
                            },
                        )
                        .map_err(|e| lib("scenario.site", e))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                SiteSpec::Explicit(sites)
            }
            (g, None) => {
                let d = default_noise();
                let g = g.unwrap_or(RawGenerated {
                    count: None,
                    radius: None,
                    sigma_d: None,
                    kappa: None,
                    sigma_f: None,
                    f_c: None,
                });
                let noise = SiteNoise {
                    sigma_d: g.sigma_d.unwrap_or(d.sigma_d),
                    kappa: g.kappa.unwrap_or(d.kappa),
                    sigma_f: g.sigma_f.unwrap_or(d.sigma_f),
                    f_c: g.f_c.unwrap_or(d.f_c),
                };
                noise.validate().map_err(|e| lib("scenario.sites", e))?;
                let count = g.count.unwrap_or(8);
                if count == 0 {
                    return Err(locate("scenario.sites.count", "must be >= 1".into()));
                }
                let radius = g.radius.unwrap_or(EARTH_RADIUS);
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(locate("scenario.sites.radius", format!("must be positive, got {radius}")));
                }
                SiteSpec::Generated { count, radius, noise }
            }
        };

        let s = raw.solver;
        let dsol = SolverOptions::default();
        let solver = SolverOptions {
            max_iterations: s.max_iterations.unwrap_or(dsol.max_iterations),
            gradient_tolerance: s.gradient_tolerance.unwrap_or(dsol.gradient_tolerance),
            step_tolerance: s.step_tolerance.unwrap_or(dsol.step_tolerance),
            num_starts: s.num_starts.unwrap_or(dsol.num_starts),
            armijo_c: s.armijo_c.unwrap_or(dsol.armijo_c),
            backtrack_factor: s.backtrack_factor.unwrap_or(dsol.backtrack_factor),
        };
        solver.validate().map_err(|e| lib("solver", e))?;

        let a = raw.assumptions;
        let rho = a.rho.unwrap_or(1e-3);
        let channels = match a.channels {
            None => ChannelMask::ALL,
            Some(list) => {
                let mut m = ChannelMask {
                    range: false,
                    angle: false,
                    doppler: false,
                };
                for c in &list {
                    match c.as_str() {
                        "range" => m.range = true,
                        "angle" => m.angle = true,
                        "doppler" => m.doppler = true,
                        other => {
                            return Err(locate(
                                "assumptions.channels",
                                format!("unknown channel `{other}` (expected range, angle or doppler)"),
                            ))
                        }
                    }
                }
                m
            }
        };
        let probes = a
            .probes
            .map(|list| {
                list.iter()
                    .map(|p| StateVector::new(Vec3::from(p.r), Vec3::from(p.v)).map_err(|e| lib("assumptions.probes", e)))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        let assumptions = AssumptionSettings {
            rho,
            delta: a.delta.unwrap_or(rho),
            num_mc_samples: a.num_mc_samples.unwrap_or(20_000),
            num_probes_ball: a.num_probes_ball.unwrap_or(64),
            num_far_probes: a.num_far_probes.unwrap_or(20),
            far_probe_min: a.far_probe_min.unwrap_or(0.01),
            far_probe_max: a.far_probe_max.unwrap_or(0.05),
            probes,
            channels,
        };
        if assumptions.far_probe_min < 2.0 * rho || assumptions.far_probe_max < assumptions.far_probe_min {
            return Err(locate(
                "assumptions.far_probe_min",
                format!("far probes need 2*rho <= far_probe_min <= far_probe_max (rho = {rho})"),
            ));
        }

        let radar_counts = raw.sweep.radar_counts.unwrap_or_else(|| vec![4, 16, 64, 256]);
        if radar_counts.is_empty() || radar_counts[0] == 0 || radar_counts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(locate("sweep.radar_counts", "must be non-empty, positive and strictly increasing".into()));
        }
        let trials = raw.sweep.trials.unwrap_or(100);
        if trials == 0 {
            return Err(locate("sweep.trials", "must be >= 1".into()));
        }

        let cfg = RunConfig {
            seed: raw.seed.unwrap_or(0),
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("output")),
            noiseless: raw.scenario.noiseless,
            truth,
            bounds,
            sites,
            solver,
            assumptions,
            radar_counts,
            trials,
        };
        // a scenario that cannot be built (e.g. a site too close) is a config error too
        cfg.scenario().map_err(|e| lib("scenario", e))?;
        let check = cfg.assumption_config().map_err(|e| lib("assumptions", e))?;
        check.validate(&cfg.truth, &cfg.bounds).map_err(|e| lib("assumptions", e))?;
        Ok(cfg)
    }

    /// The radar layout and true state, with generated sites drawn from the
    /// site-layout stream of the master seed.
    pub fn scenario(&self) -> crate::Result<Scenario> {
        let sites = match &self.sites {
            SiteSpec::Explicit(s) => s.clone(),
            SiteSpec::Generated { count, radius, noise } => generate_sites(
                &self.truth.r,
                *count,
                *radius,
                *noise,
                &mut derive_stream(self.seed, stream_ids::SITE_LAYOUT),
            )?,
        };
        Scenario::new(self.truth, sites, self.bounds, self.seed)
    }

    /// Assumption-check settings with far probes drawn from the probe stream
    /// when none are listed.
    pub fn assumption_config(&self) -> crate::Result<AssumptionCheckConfig> {
        let a = &self.assumptions;
        let probes = match &a.probes {
            Some(p) => p.clone(),
            None => far_probes(
                &self.truth,
                &self.bounds,
                a.num_far_probes,
                a.far_probe_min,
                a.far_probe_max,
                &mut derive_stream(self.seed, stream_ids::PROBES),
            )?,
        };
        Ok(AssumptionCheckConfig {
            rho: a.rho,
            delta: a.delta,
            num_mc_samples: a.num_mc_samples,
            probe_states: probes,
            num_probes_ball: a.num_probes_ball,
            channels: a.channels,
        })
    }

    /// Sweep template; needs a generated site layout.
    pub fn sweep_template(&self) -> Result<SweepTemplate, ConfigError> {
        match &self.sites {
            SiteSpec::Generated { radius, noise, .. } => Ok(SweepTemplate {
                truth: self.truth,
                bounds: self.bounds,
                noise: *noise,
                noiseless: self.noiseless,
                site_radius: *radius,
                seed: self.seed,
            }),
            SiteSpec::Explicit(_) => Err(ConfigError {
                key: Some("scenario.sites".into()),
                line: None,
                message: "the sweep draws fresh layouts and needs a [scenario.sites] section".into(),
            }),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Best-effort line of `a.b.c`: the first assignment to `c` after the header
/// of its table (or anywhere, for inline tables and array entries).
fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let parts: Vec<&str> = key.split('.').collect();
    let leaf = *parts.last()?;
    let assigns = |line: &str, name: &str| {
        let t = line.trim_start();
        t.strip_prefix(name).is_some_and(|rest| rest.trim_start().starts_with('='))
            || t.contains(&format!("{{ {name} ="))
            || t.contains(&format!(", {name} ="))
            || t.contains(&format!("{{{name}="))
    };
    let lines: Vec<&str> = text.lines().collect();
    let table = parts[..parts.len() - 1].join(".");
    let start = lines
        .iter()
        .position(|l| {
            let t = l.trim();
            t == format!("[{table}]") || t == format!("[[{table}]]")
        })
        .unwrap_or(0);
    lines
        .iter()
        .enumerate()
        .skip(start)
        .find(|(_, l)| assigns(l, leaf))
        .or_else(|| lines.iter().enumerate().find(|(_, l)| assigns(l, leaf)))
        .map(|(i, _)| i + 1)
}
