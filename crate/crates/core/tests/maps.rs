mod common;

use std::collections::HashSet;

use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use s3_core::cocycles::lyapunov_spectrum;
use s3_core::dynamics::{generate_trajectory, seeded_rng, step, MapSystem};
use s3_core::maps::{
    by_id, by_id_with_params, descriptor, linear_test_map, ExpandingCircle, KuznetsovPlykin,
    Solenoid, REGISTRY,
};
use s3_core::S3Error;

#[test]
fn registry_ids_are_unique_and_resolvable() {
    let ids: HashSet<_> = REGISTRY.iter().map(|d| d.id).collect();
    assert_eq!(ids.len(), REGISTRY.len());
    for id in ["solenoid", "plykin", "linear1d", "cat2d", "expanding1d"] {
        let d = descriptor(id).unwrap();
        let m = by_id(id).unwrap();
        assert_eq!(m.id(), id);
        assert_eq!(m.dim(), d.dim);
        assert_eq!(m.reference_params().as_slice(), d.reference_params);
        assert_eq!(m.is_invertible(), d.invertible);
        assert_eq!(m.has_analytic_jacobian(), d.analytic_jacobian);
    }
    assert!(by_id("lorenz").is_err());
}

#[test]
fn parameter_overrides_are_checked() {
    let m = by_id_with_params("solenoid", Some(&[1.2, 0.1])).unwrap();
    assert_eq!(m.reference_params().as_slice(), &[1.2, 0.1]);
    assert!(by_id_with_params("solenoid", Some(&[1.2])).is_err());
    assert!(by_id_with_params("expanding1d", Some(&[1.5])).is_err());
}

#[test]
fn analytic_jacobians_match_central_differences() {
    for d in REGISTRY {
        let m = by_id(d.id).unwrap();
        let t = generate_trajectory(m.as_ref(), 21, 100, 300).unwrap();
        for u in t.iter() {
            let u = DVector::from_column_slice(u);
            let a = m.jacobian(&u);
            let f = common::central_jacobian(m.as_ref(), &u, 1e-6);
            let err = (a - &f).amax() / f.amax();
            assert!(err < 1e-6, "{}: {err:e}", d.id);
        }
    }
}

#[test]
fn detected_unstable_dimension_matches_descriptor() {
    for d in REGISTRY {
        let m = by_id(d.id).unwrap();
        let t = generate_trajectory(m.as_ref(), 2, 20_000, 1000).unwrap();
        let spec = lyapunov_spectrum(m.as_ref(), &t, d.dim, 1).unwrap();
        assert_eq!(spec.unstable_dim().unwrap(), d.unstable_dim, "{}", d.id);
    }
}

#[test]
fn solenoid_reference_image_and_core_shift() {
    let m = Solenoid::default();
    let u = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
    let out = m.apply(&u, m.reference_params());
    assert_abs_diff_eq!(out[0], 1.8, epsilon = 1e-15);
    let x = m.param_derivative(&u, 0);
    assert_eq!(x.as_slice(), &[0.75, 0.0, 0.0]);
}

#[test]
fn solenoid_stays_in_the_solid_torus() {
    let m = Solenoid::default();
    let t = generate_trajectory(&m, 3, 10_000, 100).unwrap();
    for u in t.iter() {
        let rho = (u[0] - 1.4).hypot(u[2]);
        assert!(rho < 2.0 / 3.0 + 1e-12, "left the torus: {u:?}");
    }
}

#[test]
fn plykin_preserves_the_unit_sphere() {
    let m = KuznetsovPlykin::default();
    let mut rng = seeded_rng(17);
    for _ in 0..1000 {
        let u = m.sample_initial(&mut rng);
        assert_abs_diff_eq!(u.norm(), 1.0, epsilon = 1e-12);
        let img = m.apply(&u, m.reference_params());
        assert_abs_diff_eq!(img.norm(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn plykin_orbit_stays_normalised() {
    let m = KuznetsovPlykin::default();
    let t = generate_trajectory(&m, 5, 50_000, 100).unwrap();
    for u in t.iter() {
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }
}

#[test]
fn plykin_rejects_states_far_off_the_sphere() {
    let m = KuznetsovPlykin::default();
    let u = DVector::from_column_slice(&[0.0, 0.0, 1.1]);
    let err = step(&m, &u, m.reference_params()).unwrap_err();
    assert!(matches!(err, S3Error::ChartExit { .. }), "{err}");
}

#[test]
fn contraction_map_from_constructor() {
    let m = linear_test_map(0.5, None).unwrap();
    assert_eq!(m.dim(), 1);
    let u = DVector::from_element(1, 4.0);
    assert_eq!(m.apply(&u, &DVector::from_element(1, 1.0))[0], 3.0);
    assert!(linear_test_map(1.5, None).is_err());
}

#[test]
fn toral_map_from_eigenvalue() {
    let golden = (3.0 + 5f64.sqrt()) / 2.0;
    let m = linear_test_map(1.0 / golden, Some(golden)).unwrap();
    let j = m.jacobian(&DVector::zeros(2));
    assert_abs_diff_eq!(j.trace(), 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(j.determinant(), 1.0, epsilon = 1e-12);
    // eigenvalues must multiply to one and sum to an integer
    assert!(linear_test_map(0.5, Some(3.0)).is_err());
    assert!(linear_test_map(0.4, Some(2.5)).is_err());
}

#[test]
fn doubling_map_preserves_lebesgue_measure() {
    let m = ExpandingCircle::new(0.0).unwrap();
    let t = generate_trajectory(&m, 7, 200_000, 100).unwrap();
    let bins = 20;
    let mut counts = vec![0usize; bins];
    for u in t.iter() {
        counts[((u[0] * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = t.len() as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 19 degrees of freedom: the 0.999 quantile is 43.8
    assert!(chi2 < 43.8, "chi2 = {chi2}");
}

#[test]
fn doubling_map_exponent_is_log_two() {
    let m = ExpandingCircle::new(0.0).unwrap();
    let t = generate_trajectory(&m, 1, 5_000, 100).unwrap();
    let spec = lyapunov_spectrum(&m, &t, 1, 1).unwrap();
    assert_abs_diff_eq!(spec.exponents[0], 2f64.ln(), epsilon = 1e-3);
}

#[test]
fn expanding_map_rejects_non_expanding_parameters() {
    assert!(ExpandingCircle::new(1.0).is_err());
    assert!(ExpandingCircle::new(-1.2).is_err());
    let m = ExpandingCircle::new(0.3).unwrap();
    assert!(!m.is_invertible());
    assert!(m.density(0.2).is_none());
}

#[test]
fn expanding_map_slope_helpers_match_differences() {
    let m = ExpandingCircle::new(0.3).unwrap();
    let h = 1e-6;
    for k in 0..50 {
        let x = k as f64 / 50.0 + 0.003;
        let f = |y: f64| m.apply(&DVector::from_element(1, y), m.reference_params())[0];
        let slope = (f(x + h) - f(x - h)) / (2.0 * h);
        assert_abs_diff_eq!(m.slope(x), slope, epsilon = 1e-8);
        let inv = |y: f64| 1.0 / m.slope(y);
        let d_inv = (inv(x + h) - inv(x - h)) / (2.0 * h);
        assert_abs_diff_eq!(m.inverse_slope_derivative(x), d_inv, epsilon = 1e-8);
    }
}
