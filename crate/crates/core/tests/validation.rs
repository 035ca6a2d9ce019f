mod common;

use approx::assert_abs_diff_eq;
use rand::Rng;
use rand_distr::StandardNormal;
use s3_core::dynamics::seeded_rng;
use s3_core::maps::{AffineContraction, ExpandingCircle, Solenoid};
use s3_core::objectives::{Constant, Objective};
use s3_core::validation::{
    convergence_study, ergodic_mean, fd_sensitivity, naive_ruelle_terms, variance_growth_rate,
    FdConfig,
};
use s3_core::S3Error;

fn small_fd(param: usize) -> FdConfig {
    FdConfig { param, samples_per_side: 20_000, chains: 8, spinup: 200, ..Default::default() }
}

#[test]
fn affine_map_difference_is_two() {
    let m = AffineContraction::new(0.5).unwrap();
    let objs = vec![common::component_objective(0, 1), Box::new(Constant(4.0)) as Box<dyn Objective>];
    let cfg = FdConfig { richardson: true, ..small_fd(0) };
    let fd = fd_sensitivity(&m, &objs, &cfg).unwrap();
    assert_abs_diff_eq!(fd[0].value, 2.0, epsilon = 1e-8);
    assert!(fd[0].warning.is_none());
    assert_eq!(fd[0].samples, 20_000);
    assert_eq!(fd[1].value, 0.0);
    assert_eq!(fd[1].stderr, 0.0);
}

#[test]
fn bad_difference_settings_are_rejected() {
    let m = AffineContraction::new(0.5).unwrap();
    let objs = vec![common::component_objective(0, 1)];
    for cfg in [
        FdConfig { ds: 0.0, ..small_fd(0) },
        FdConfig { ds: -1e-2, ..small_fd(0) },
        FdConfig { chains: 0, ..small_fd(0) },
        FdConfig { samples_per_side: 10, ..small_fd(0) },
        small_fd(3),
    ] {
        assert!(matches!(fd_sensitivity(&m, &objs, &cfg), Err(S3Error::Config(_))));
    }
}

#[test]
fn difference_is_reproducible_from_its_seed() {
    let m = Solenoid::default();
    let objs = vec![common::component_objective(2, 3)];
    let a = fd_sensitivity(&m, &objs, &small_fd(1)).unwrap();
    let b = fd_sensitivity(&m, &objs, &small_fd(1)).unwrap();
    assert_eq!(a[0].value, b[0].value);
    let c = fd_sensitivity(&m, &objs, &FdConfig { base_seed: 99, ..small_fd(1) }).unwrap();
    assert_ne!(a[0].value, c[0].value);
}

#[test]
fn solenoid_radius_follows_the_core_shift() {
    // ⟨r⟩ = s1 + ⟨cos θ⟩ / (2 (1 - 1/4)) and ⟨cos θ⟩ does not depend on s1
    let m = Solenoid::default();
    let objs = vec![common::component_objective(0, 3)];
    let cfg = FdConfig { samples_per_side: 400_000, chains: 16, ..small_fd(0) };
    let fd = fd_sensitivity(&m, &objs, &cfg).unwrap();
    assert!((fd[0].value - 1.0).abs() < 3.0 * fd[0].stderr.max(1e-6), "{:?}", fd[0]);
}

#[test]
fn expanding_map_difference_matches_the_spectral_reference() {
    let m = ExpandingCircle::new(common::EXPANDING_S).unwrap();
    let objs = vec![common::cos_objective()];
    let cfg = FdConfig { samples_per_side: 4_000_000, chains: 32, ds: 2e-2, ..small_fd(0) };
    let fd = fd_sensitivity(&m, &objs, &cfg).unwrap();
    let z = (fd[0].value - common::EXPANDING_REFERENCE) / fd[0].stderr;
    assert!(z.abs() < 3.0, "{:?}, z = {z}", fd[0]);
}

#[test]
fn spectral_reference_is_reproduced() {
    assert_abs_diff_eq!(
        common::spectral_sensitivity(common::EXPANDING_S),
        common::EXPANDING_REFERENCE,
        epsilon = 1e-9
    );
    // Lebesgue measure at s = 0 gives a vanishing mean
    assert_abs_diff_eq!(common::spectral_mean_cos(0.0, 24, 1024), 0.0, epsilon = 1e-14);
}

#[test]
fn naive_terms_start_finite_and_grow_in_variance() {
    let m = Solenoid::default();
    let obj = common::component_objective(1, 3);
    let terms = naive_ruelle_terms(&m, obj.as_ref(), 1, 10, 5000, 5, 3).unwrap();
    assert_eq!(terms.len(), 11);
    assert!(terms[0].mean.is_finite() && terms[0].variance.is_finite());
    assert!(terms[10].variance > 100.0 * terms[2].variance);
    let fit = variance_growth_rate(&terms, 2..11).unwrap();
    assert!(fit.slope > 0.0);
    assert!(naive_ruelle_terms(&m, obj.as_ref(), 1, 10, 1, 5, 3).is_err());
}

#[test]
fn synthetic_root_n_errors_give_slope_minus_half() {
    let ns: Vec<usize> = (10..=18).map(|k| 1usize << k).collect();
    let rep = convergence_study(
        |n, r| {
            let mut rng = seeded_rng((n as u64) << 8 | r as u64);
            let z: f64 = rng.sample(StandardNormal);
            Ok(1.0 + z / (n as f64).sqrt())
        },
        Some(1.0),
        &ns,
        200,
    )
    .unwrap();
    assert!(!rep.degenerate);
    assert!((rep.fitted_slope + 0.5).abs() < 0.05, "{rep:?}");
    assert!(rep.slope_ci.0 < -0.5 && -0.5 < rep.slope_ci.1);
}

#[test]
fn exact_estimator_is_flagged_degenerate() {
    let rep = convergence_study(|_, _| Ok(2.0), Some(2.0), &[10, 20, 40, 80], 3).unwrap();
    assert!(rep.degenerate);
    assert!(rep.fitted_slope.is_nan());
}

#[test]
fn convergence_study_input_checks() {
    let f = |_: usize, _: usize| Ok(0.0);
    assert!(matches!(convergence_study(f, None, &[1, 2, 3, 4], 2), Err(S3Error::Unsupported(_))));
    assert!(matches!(convergence_study(f, Some(0.0), &[1, 2, 3], 2), Err(S3Error::Config(_))));
    assert!(matches!(convergence_study(f, Some(0.0), &[1, 2, 2, 4], 2), Err(S3Error::Config(_))));
    assert!(matches!(convergence_study(f, Some(0.0), &[1, 2, 3, 4], 0), Err(S3Error::Config(_))));
}

#[test]
fn ergodic_mean_of_a_constant_series() {
    let e = ergodic_mean(&[3.0; 100], 10);
    assert_eq!(e.value, 3.0);
    assert_eq!(e.stderr, 0.0);
}
