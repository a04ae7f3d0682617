mod common;

use common::{sites_around, three_radar_sites};
use orbit_mle::consistency::{default_noise, default_truth};
use orbit_mle::likelihood::objective;
use orbit_mle::measurement::{noiseless_measurements, simulate_scenario};
use orbit_mle::rng::{derive_stream, stream_ids};
use orbit_mle::solver::{descend, estimate, initialize, SolverOptions};
use orbit_mle::{Error, ParameterBounds, Scenario, StateVector, Vec3};
use proptest::prelude::*;

#[test]
fn noiseless_three_radars_exact() {
    let truth = default_truth();
    let sites = three_radar_sites();
    let meas = noiseless_measurements(&truth, &sites).unwrap();
    let res = estimate(&sites, &meas, &ParameterBounds::default(), &SolverOptions::default(), &mut derive_stream(0, stream_ids::SOLVER)).unwrap();
    assert!(res.converged);
    assert!((res.estimate.r - truth.r).norm() / truth.r.norm() < 1e-6);
    assert!((res.estimate.v - truth.v).norm() / truth.v.norm() < 1e-6);
    let kappa_sum: f64 = sites.iter().map(|s| s.kappa).sum();
    assert!((res.objective_value + kappa_sum).abs() <= 1e-9 * kappa_sum);
}

#[test]
fn single_radar_noiseless_position() {
    // one radar determines the position exactly; velocity only along the line of sight
    let truth = default_truth();
    let sites = three_radar_sites()[..1].to_vec();
    let meas = noiseless_measurements(&truth, &sites).unwrap();
    let res = estimate(&sites, &meas, &ParameterBounds::default(), &SolverOptions::default(), &mut derive_stream(0, 1)).unwrap();
    assert!((res.estimate.r - truth.r).norm() < 1e-3);
    let u = (truth.r - sites[0].s).normalize();
    assert!((res.estimate.v.dot(&u) - truth.v.dot(&u)).abs() < 1e-6);
}

#[test]
fn estimate_stays_feasible_when_truth_on_boundary() {
    let bounds = ParameterBounds::new(6.471e6, 5.0e7, 7.0e3).unwrap();
    let truth = StateVector::new(Vec3::new(6.878e6, 0.0, 0.0), Vec3::new(0.0, 7.0e3, 0.0)).unwrap();
    let sites = sites_around(&truth.r, 6, default_noise(), 4);
    let scn = Scenario::new(truth, sites.clone(), bounds, 8).unwrap();
    let meas = simulate_scenario(&scn).unwrap();
    let res = estimate(&sites, &meas, &bounds, &SolverOptions::default(), &mut derive_stream(1, 1)).unwrap();
    assert!(res.estimate.is_feasible(&bounds));
    assert!(res.estimate.v.norm() <= 7.0e3);
    assert!(res.converged);
}

#[test]
fn mismatched_inputs_rejected() {
    let truth = default_truth();
    let sites = three_radar_sites();
    let meas = noiseless_measurements(&truth, &sites).unwrap();
    let err = estimate(&sites, &meas[..2], &ParameterBounds::default(), &SolverOptions::default(), &mut derive_stream(0, 0)).unwrap_err();
    assert!(matches!(err, Error::LengthMismatch { sites: 3, measurements: 2 }));
}

#[test]
fn descent_from_far_start_reaches_same_optimum() {
    let truth = default_truth();
    let sites = sites_around(&truth.r, 10, default_noise(), 12);
    let scn = Scenario::new(truth, sites.clone(), ParameterBounds::default(), 12).unwrap();
    let meas = simulate_scenario(&scn).unwrap();
    let bounds = ParameterBounds::default();
    let opts = SolverOptions::default();
    let best = estimate(&sites, &meas, &bounds, &opts, &mut derive_stream(3, 3)).unwrap();
    let far = StateVector::new(truth.r + Vec3::new(5.0e4, -4.0e4, 3.0e4), truth.v + Vec3::new(-300.0, 200.0, 100.0)).unwrap();
    let trace = descend(&far, &sites, &meas, &bounds, &opts, 0).unwrap();
    assert!(trace.result.converged);
    assert!((trace.result.estimate.r - best.estimate.r).norm() < 1e-3);
    assert!(trace.objective_history.windows(2).all(|w| w[1] <= w[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noiseless_recovery_on_random_layouts(seed in 0u64..10_000, n in 3usize..12) {
        let truth = default_truth();
        let sites = sites_around(&truth.r, n, default_noise(), seed);
        let meas = noiseless_measurements(&truth, &sites).unwrap();
        let res = estimate(&sites, &meas, &ParameterBounds::default(), &SolverOptions::default(), &mut derive_stream(seed, 5)).unwrap();
        prop_assert!(res.converged);
        prop_assert!((res.estimate.r - truth.r).norm() / truth.r.norm() < 1e-6);
        prop_assert!((res.estimate.v - truth.v).norm() / truth.v.norm() < 1e-6);
    }

    #[test]
    fn result_feasible_and_no_worse_than_start(seed in 0u64..10_000, n in 1usize..9) {
        let truth = default_truth();
        let sites = sites_around(&truth.r, n, default_noise(), seed);
        let scn = Scenario::new(truth, sites.clone(), ParameterBounds::default(), seed).unwrap();
        let meas = simulate_scenario(&scn).unwrap();
        let bounds = ParameterBounds::default();
        let init = initialize(&sites, &meas, &bounds).unwrap();
        let f0 = objective(&init, &sites, &meas).unwrap().total;
        let res = estimate(&sites, &meas, &bounds, &SolverOptions::default(), &mut derive_stream(seed, 6)).unwrap();
        prop_assert!(res.estimate.is_feasible(&bounds));
        prop_assert!(res.objective_value <= f0 + 1e-12);
        prop_assert!(!res.converged || res.gradient_norm <= 1e-8 || res.last_step <= 1e-12);
    }
}
