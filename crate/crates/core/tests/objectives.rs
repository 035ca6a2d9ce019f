mod common;

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use s3_core::dynamics::{generate_trajectory, seeded_rng, MapSystem};
use s3_core::maps::{KuznetsovPlykin, Solenoid};
use s3_core::objectives::{
    solenoid_r_theta_family, solenoid_theta_family, sphere_families, Coordinate, NodalAxis,
    NodalBasisFamily, Objective,
};
use s3_core::pipeline::{run_sensitivity, PipelineConfig};

fn sum_at(objs: &[Box<dyn Objective>], u: &[f64]) -> f64 {
    objs.iter().map(|o| o.value(u)).sum()
}

#[test]
fn solenoid_families_partition_unity_on_the_attractor() {
    let m = Solenoid::default();
    let t = generate_trajectory(&m, 1, 5000, 500).unwrap();
    for fam in [solenoid_theta_family(), solenoid_r_theta_family()] {
        let objs = fam.objectives();
        assert_eq!(objs.len(), 16);
        for u in t.iter() {
            assert_abs_diff_eq!(sum_at(&objs, u), 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn sphere_families_partition_unity() {
    let m = KuznetsovPlykin::default();
    let mut rng = seeded_rng(3);
    let (polar, azimuth) = sphere_families();
    let (p, a) = (polar.objectives(), azimuth.objectives());
    for _ in 0..2000 {
        let u = m.sample_initial(&mut rng);
        assert_abs_diff_eq!(sum_at(&p, u.as_slice()), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sum_at(&a, u.as_slice()), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn flat_index_runs_fastest_along_the_last_axis() {
    let fam = solenoid_r_theta_family();
    assert_eq!(fam.node_indices(0), vec![0, 0]);
    assert_eq!(fam.node_indices(1), vec![0, 1]);
    assert_eq!(fam.node_indices(4), vec![1, 0]);
    assert_eq!(fam.node_indices(15), vec![3, 3]);
    assert!(fam.node(16).is_err());
}

#[test]
fn malformed_axes_are_rejected() {
    assert!(NodalBasisFamily::new(vec![]).is_err());
    assert!(NodalBasisFamily::new(vec![NodalAxis::bounded(Coordinate::Component(0), 1.0, 0.0, 4)]).is_err());
    assert!(NodalBasisFamily::new(vec![NodalAxis::bounded(Coordinate::Component(0), 0.0, 1.0, 1)]).is_err());
    let axis = NodalAxis::periodic(Coordinate::Component(0), 0.0, 1.0, 3);
    assert!(NodalBasisFamily::new(vec![axis; 3]).is_err());
}

#[test]
fn gradients_match_central_differences_away_from_kinks() {
    let m = KuznetsovPlykin::default();
    let mut rng = seeded_rng(4);
    let (polar, azimuth) = sphere_families();
    let h = 1e-7;
    let mut checked = 0;
    for _ in 0..300 {
        let u = m.sample_initial(&mut rng);
        for fam in [&polar, &azimuth] {
            for obj in fam.objectives() {
                let g = obj.gradient(u.as_slice());
                for j in 0..3 {
                    let mut up = u.clone();
                    let mut dn = u.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (obj.value(up.as_slice()) - obj.value(dn.as_slice())) / (2.0 * h);
                    // a kink inside the stencil shows up as a jump between one-sided slopes
                    let left = (obj.value(u.as_slice()) - obj.value(dn.as_slice())) / h;
                    let right = (obj.value(up.as_slice()) - obj.value(u.as_slice())) / h;
                    if (left - right).abs() > 1e-4 {
                        continue;
                    }
                    assert_abs_diff_eq!(g[j], fd, epsilon = 1e-5);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn coordinate_gradients_match_differences() {
    let u = [0.3, -0.5, 0.81];
    let h = 1e-7;
    for c in [Coordinate::Polar, Coordinate::Azimuth, Coordinate::Component(2)] {
        let g = c.gradient(&u);
        for j in 0..3 {
            let mut up = u;
            let mut dn = u;
            up[j] += h;
            dn[j] -= h;
            assert_abs_diff_eq!(g[j], (c.value(&up) - c.value(&dn)) / (2.0 * h), epsilon = 1e-7);
        }
    }
    assert_abs_diff_eq!(Coordinate::Polar.value(&[0.0, 0.0, 1.0]), 0.0);
    assert_abs_diff_eq!(Coordinate::Azimuth.value(&[-1.0, 0.0, 0.0]), PI);
}

#[test]
fn family_sensitivities_sum_to_zero() {
    let m = Solenoid::default();
    let objs = solenoid_theta_family().objectives();
    let cfg = PipelineConfig { samples: 5000, param: 1, ..Default::default() };
    let run = run_sensitivity(&m, &objs, &cfg, &[1, 2]).unwrap();
    let stable: f64 = run.objectives.iter().map(|o| o.stable.value).sum();
    let unstable: f64 = run.objectives.iter().map(|o| o.unstable.value).sum();
    assert!(stable.abs() < 1e-10, "stable sum {stable:e}");
    // fixed truncation so every node sums the same lags
    let fixed = PipelineConfig { truncation: s3_core::unstable::Truncation::Fixed(10), ..cfg };
    let run = run_sensitivity(&m, &objs, &fixed, &[1, 2]).unwrap();
    let unstable_fixed: f64 = run.objectives.iter().map(|o| o.unstable.value).sum();
    assert!(unstable_fixed.abs() < 1e-10, "unstable sum {unstable_fixed:e}");
    assert!(unstable.is_finite());
}
