//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 invalid input,
//! 3 solver did not converge.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{ConfigError, RunConfig};
use crate::consistency::{
    assumption_v_report, check_ball_sup_determinism, check_lemma_approximations, compute_bn_prefixes, log_ratio_stats,
    run_consistency_sweep, ConsistencyReport, LogRatioStats, SIGNIFICANCE_SE,
};
use crate::io::{fmt_f64, read_measurements_csv, write_atomic, write_measurements_csv};
use crate::likelihood::objective;
use crate::measurement::{noiseless_measurements, simulate_scenario};
use crate::rng::{derive_stream, stream_ids};
use crate::solver::estimate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "orbit-mle", version, about = "Maximum-likelihood orbit determination from radar range, bearing and Doppler")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (simulate, estimate) or directory (check-assumptions, sweep).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the master seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks automatically. Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one measurement tuple per radar and write the CSV.
    Simulate,
    /// Estimate the state from a measurement CSV.
    Estimate {
        #[arg(long)]
        measurements: PathBuf,
    },
    /// Monte Carlo checks of the consistency conditions.
    CheckAssumptions,
    /// Error quantiles as the number of radars grows.
    Sweep,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Self {
            code: EXIT_CHECK_FAILED,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::input(e)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_CHECK_FAILED;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        // seed-dependent layouts and probes must still be valid
        let check = cfg.assumption_config().map_err(Failure::input)?;
        check.validate(&cfg.truth, &cfg.bounds).map_err(Failure::input)?;
        cfg.scenario().map_err(Failure::input)?;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<i32, Failure> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg, &out_file(cli, &cfg, "measurements.csv")),
        Command::Estimate { measurements } => cmd_estimate(&cfg, measurements, &out_file(cli, &cfg, "estimate.txt")),
        Command::CheckAssumptions => cmd_check_assumptions(&cfg, &out_dir(cli, &cfg)?),
        Command::Sweep => cmd_sweep(&cfg, &out_dir(cli, &cfg)?),
    }
}

fn out_file(cli: &Cli, cfg: &RunConfig, default_name: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| cfg.output_dir.join(default_name))
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    write_atomic(path, bytes).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<i32, Failure> {
    let scn = cfg.scenario().map_err(Failure::input)?;
    let meas = if cfg.noiseless {
        noiseless_measurements(&scn.truth, &scn.sites)
    } else {
        simulate_scenario(&scn)
    }
    .map_err(Failure::runtime)?;
    let mut buf = Vec::new();
    write_measurements_csv(&mut buf, &scn.sites, &meas).map_err(Failure::runtime)?;
    write_file(out, &buf)?;
    println!("wrote {} measurements to {}", meas.len(), out.display());
    Ok(EXIT_OK)
}

pub fn cmd_estimate(cfg: &RunConfig, measurements: &Path, out: &Path) -> Result<i32, Failure> {
    let file = fs::File::open(measurements).map_err(|e| Failure::input(format!("cannot open {}: {e}", measurements.display())))?;
    let (sites, meas) =
        read_measurements_csv(file).map_err(|e| Failure::input(format!("{}: {e}", measurements.display())))?;
    let mut stream = derive_stream(cfg.seed, stream_ids::SOLVER);
    let res = estimate(&sites, &meas, &cfg.bounds, &cfg.solver, &mut stream).map_err(|e| match e {
        crate::Error::OptimizationFailed(_) => Failure {
            code: EXIT_NOT_CONVERGED,
            message: e.to_string(),
        },
        other => Failure::input(other),
    })?;
    let parts = objective(&res.estimate, &sites, &meas).map_err(Failure::runtime)?;

    let mut text = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(text, "{k} = {v}");
    };
    kv("converged", res.converged.to_string());
    kv("iterations", res.iterations.to_string());
    kv("start_index", res.start_index.to_string());
    kv("num_measurements", sites.len().to_string());
    for (k, x) in ["r_x", "r_y", "r_z"].iter().zip(res.estimate.r.iter()) {
        kv(k, fmt_f64(*x));
    }
    for (k, x) in ["v_x", "v_y", "v_z"].iter().zip(res.estimate.v.iter()) {
        kv(k, fmt_f64(*x));
    }
    kv("objective", fmt_f64(res.objective_value));
    kv("range_term", fmt_f64(parts.range_term));
    kv("angle_term", fmt_f64(parts.angle_term));
    kv("doppler_term", fmt_f64(parts.doppler_term));
    kv("gradient_norm", fmt_f64(res.gradient_norm));
    kv("last_step", fmt_f64(res.last_step));
    write_file(out, text.as_bytes())?;

    let r = res.estimate.r;
    let v = res.estimate.v;
    println!("r = [{}, {}, {}]", fmt_f64(r.x), fmt_f64(r.y), fmt_f64(r.z));
    println!("v = [{}, {}, {}]", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z));
    println!("converged = {}", res.converged);
    if res.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("solver stopped after {} iterations without converging", res.iterations);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// One `assumption_iv.csv` row per probe and site prefix.
fn prefix_rows(csv: &mut String, probe_id: usize, stats: &LogRatioStats, b_prefix: &[f64], samples: usize) -> bool {
    let mut all = true;
    let mut mean_sum = 0.0;
    let mut var_sum = 0.0;
    for (i, b) in b_prefix.iter().enumerate() {
        mean_sum += stats.per_site_mean[i];
        var_sum += stats.per_site_variance[i];
        let cum = mean_sum / b;
        let se = (var_sum / samples as f64).sqrt() / b;
        let pass = -cum > SIGNIFICANCE_SE * se;
        all &= pass;
        let _ = writeln!(csv, "{probe_id},{},{},{},{},{pass}", i + 1, fmt_f64(*b), fmt_f64(cum), fmt_f64(se));
    }
    all
}

pub fn cmd_check_assumptions(cfg: &RunConfig, out_dir: &Path) -> Result<i32, Failure> {
    let scn = cfg.scenario().map_err(Failure::input)?;
    let check = cfg.assumption_config().map_err(Failure::input)?;
    check.validate(&scn.truth, &scn.bounds).map_err(Failure::input)?;
    let ball = check.ball(&scn.bounds).map_err(Failure::input)?;
    let n = check.num_mc_samples;
    let stats_for = |ball| {
        log_ratio_stats(&scn.sites, &scn.truth, &check.probe_states, ball, check.channels, n, scn.seed, check.delta)
            .map_err(Failure::runtime)
    };

    let point = stats_for(None)?;
    let ident = point.iter().all(LogRatioStats::passes);
    let determinism = check_ball_sup_determinism(&scn, &check).map_err(Failure::runtime)?;
    let iv = stats_for(Some(&ball))?;
    let b_prefix = compute_bn_prefixes(&scn.sites, &scn.truth, check.delta).map_err(Failure::runtime)?;

    let mut csv = String::from("probe_id,n_sites,b_n,cum_mean_over_bn,std_err,pass\n");
    let mut iv_pass = true;
    for (k, s) in iv.iter().enumerate() {
        iv_pass &= prefix_rows(&mut csv, k, s, &b_prefix, n);
    }
    let v_reports = iv
        .iter()
        .map(|s| assumption_v_report(&scn.sites, &scn.truth, check.delta, s))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(Failure::runtime)?;
    let v_pass = v_reports.iter().all(|r| r.bounded);

    let y = scn.truth.r - scn.sites[0].s;
    let yn = y.norm();
    let lemma = check_lemma_approximations(&y, &scn.truth.v, &[1e-2 * yn, 5e-3 * yn, 2.5e-3 * yn], cfg.seed)
        .map_err(Failure::runtime)?;

    let mut summary = String::new();
    let mut line = |s: String| {
        let _ = writeln!(summary, "{s}");
    };
    line(format!("sites = {}", scn.sites.len()));
    line(format!("probes = {}", check.probe_states.len()));
    line(format!("mc_samples_per_site = {n}"));
    line(format!("rho = {}", fmt_f64(check.rho)));
    line(format!("delta = {}", fmt_f64(check.delta)));
    line(format!("b_n = {}", fmt_f64(*b_prefix.last().expect("sites"))));
    let worst_iv = iv.iter().map(|s| s.epsilon_margin / s.std_err).fold(f64::INFINITY, f64::min);
    line(format!("iv_min_margin_in_std_err = {}", fmt_f64(worst_iv)));
    let worst_v = v_reports
        .iter()
        .map(|r| r.partial_sums.last().copied().unwrap_or(0.0) / r.bound)
        .fold(0.0, f64::max);
    line(format!("v_max_partial_sum_over_bound = {}", fmt_f64(worst_v)));
    line(format!("lemma_unit_vector_slope = {}", fmt_f64(lemma.unit_vector_slope)));
    line(format!("lemma_inner_product_slope = {}", fmt_f64(lemma.inner_product_slope)));
    line(format!("assumption_ii {}", verdict(ident)));
    line(format!("assumption_iii {}", verdict(determinism)));
    line(format!("assumption_iv {}", verdict(iv_pass)));
    line(format!("assumption_v {}", verdict(v_pass)));
    line(format!("lemmas {}", verdict(lemma.pass)));
    let all = ident && determinism && iv_pass && v_pass && lemma.pass;
    line(format!("overall {}", verdict(all)));

    write_file(&out_dir.join("assumption_iv.csv"), csv.as_bytes())?;
    write_file(&out_dir.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(if all { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn consistency_csv(report: &ConsistencyReport) -> String {
    let mut csv = String::from("N,trials,failures,pos_q10,pos_q50,pos_q90,vel_q10,vel_q50,vel_q90\n");
    for (k, n) in report.radar_counts.iter().enumerate() {
        let p = report.error_quantiles_position[k];
        let v = report.error_quantiles_velocity[k];
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{},{},{},{}",
            report.trials,
            report.failures[k],
            fmt_f64(p.q10),
            fmt_f64(p.q50),
            fmt_f64(p.q90),
            fmt_f64(v.q10),
            fmt_f64(v.q50),
            fmt_f64(v.q90)
        );
    }
    csv
}

pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<i32, Failure> {
    let template = cfg.sweep_template()?;
    let report = run_consistency_sweep(&template, &cfg.radar_counts, cfg.trials, &cfg.solver).map_err(Failure::runtime)?;
    let csv = consistency_csv(&report);
    write_file(&out_dir.join("consistency.csv"), csv.as_bytes())?;
    print!("{csv}");
    if report.median_position_decreasing() {
        Ok(EXIT_OK)
    } else {
        eprintln!("median position error is not strictly decreasing in the number of radars");
        Ok(EXIT_CHECK_FAILED)
    }
}
