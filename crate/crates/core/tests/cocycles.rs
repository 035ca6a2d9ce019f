mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use s3_core::cocycles::{
    clv_frames, compute_clvs, ginelli_window, lyapunov_spectrum, spectrum_from_jacobians,
    split_perturbation, thin_qr, unstable_coefficient, ClvFrames, JacobianSeries,
};
use s3_core::dynamics::{generate_trajectory, perturbation_along, MapSystem, Trajectory, VectorSeries};
use s3_core::maps::{Solenoid, ToralAutomorphism};
use s3_core::S3Error;

fn frames_for(m: &dyn MapSystem, seed: u64, len: usize, spin: usize, k: usize) -> (Trajectory, JacobianSeries, ClvFrames) {
    let t = generate_trajectory(m, seed, len, 1000).unwrap();
    let jacs = JacobianSeries::along(m, &t);
    let spec = lyapunov_spectrum(m, &t, m.dim(), 1).unwrap();
    let win = ginelli_window(len, spin, spin).unwrap();
    let f = clv_frames(&jacs, &spec, k, k, win).unwrap();
    (t, jacs, f)
}

#[test]
fn thin_qr_reconstructs_and_keeps_axes() {
    let a = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, 0.5, 0.0, -3.0]);
    let (q, r) = thin_qr(a.clone());
    assert!((&q * &r - &a).amax() < 1e-14);
    assert!((q.transpose() * &q - DMatrix::identity(2, 2)).amax() < 1e-14);
    assert!(r[(0, 0)] >= 0.0 && r[(1, 1)] >= 0.0);
    assert_eq!(q.column(0).as_slice(), &[0.0, 1.0, 0.0]);
}

#[test]
fn cat_map_exponents_are_log_golden() {
    let m = ToralAutomorphism::cat();
    let t = generate_trajectory(&m, 1, 2000, 10).unwrap();
    let spec = lyapunov_spectrum(&m, &t, 2, 1).unwrap();
    let l = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    assert_abs_diff_eq!(spec.exponents[0], l, epsilon = 1e-8);
    assert_abs_diff_eq!(spec.exponents[1], -l, epsilon = 1e-8);
    assert_eq!(spec.unstable_dim().unwrap(), 1);
}

#[test]
fn cat_map_clvs_are_eigenvectors() {
    let m = ToralAutomorphism::cat();
    let (_, _, f) = frames_for(&m, 2, 400, 100, 2);
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    let eig = a.clone().symmetric_eigen();
    let (hi, lo) = if eig.eigenvalues[0] > eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    for n in f.window() {
        for (i, idx) in [(0, hi), (1, lo)] {
            let e = eig.eigenvectors.column(idx);
            let v = f.v_at(i, n);
            let w = f.w_at(i, n);
            assert!(1.0 - v.dot(&e).abs() < 1e-12, "V{i} at {n}");
            // the matrix is symmetric, so left and right eigenvectors coincide
            assert!(1.0 - w.dot(&e).abs() < 1e-12, "W{i} at {n}");
            assert_abs_diff_eq!(f.z_at(i, n), eig.eigenvalues[idx].abs(), epsilon = 1e-12);
        }
    }
}

#[test]
fn adjoint_vectors_are_left_eigenvectors_of_a_nonsymmetric_cocycle() {
    // a fixed upper-triangular matrix: CLVs are its eigenvectors, adjoints the
    // eigenvectors of the transpose
    let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 0.5]);
    let jacs = JacobianSeries::from_matrices(2, &vec![a.clone(); 600]);
    let spec = spectrum_from_jacobians(&jacs, 2, 1).unwrap();
    let f = clv_frames(&jacs, &spec, 2, 2, 150..450).unwrap();
    let v1 = DVector::from_column_slice(&[1.0, 0.0]);
    let v2 = DVector::from_column_slice(&[1.0, -2.5]).normalize();
    let w1 = DVector::from_column_slice(&[2.5, 1.0]).normalize();
    let w2 = DVector::from_column_slice(&[0.0, 1.0]);
    for n in f.window() {
        assert!(1.0 - f.v_at(0, n).dot(&v1).abs() < 1e-12);
        assert!(1.0 - f.v_at(1, n).dot(&v2).abs() < 1e-12);
        assert!(1.0 - f.w_at(0, n).dot(&w1).abs() < 1e-12);
        assert!(1.0 - f.w_at(1, n).dot(&w2).abs() < 1e-12);
        assert!(f.v_at(0, n).dot(&f.w_at(1, n)).abs() < 1e-12);
        assert!(f.v_at(1, n).dot(&f.w_at(0, n)).abs() < 1e-12);
    }
}

#[test]
fn solenoid_stable_clvs_have_no_angular_part() {
    let m = Solenoid::default();
    let t = generate_trajectory(&m, 4, 3000, 1000).unwrap();
    let jacs = JacobianSeries::along(&m, &t);
    let basis = compute_clvs(&jacs, 3, 1000..2000).unwrap();
    for i in 1..3 {
        for v in basis.vectors[i].iter() {
            assert!(v[1].abs() < 1e-6, "V{} θ-component {:e}", i + 1, v[1]);
        }
    }
}

#[test]
fn solenoid_adjoint_unstable_vector_is_the_angle_direction() {
    let m = Solenoid::default();
    let (_, _, f) = frames_for(&m, 5, 3000, 800, 1);
    for n in f.window() {
        let w = f.w_at(0, n);
        assert!(1.0 - w[1].abs() < 1e-6, "W at {n}: {w:?}");
    }
}

#[test]
fn biorthogonality_and_covariance() {
    for (id, seed) in [("solenoid", 6u64), ("plykin", 7)] {
        let m = s3_core::maps::by_id(id).unwrap();
        let (_, jacs, f) = frames_for(m.as_ref(), seed, 3000, 800, 1);
        let du = f.unstable_dim;
        let full = compute_clvs(&jacs, m.dim(), f.window()).unwrap();
        for n in f.window() {
            for i in du..m.dim() {
                let v = full.vectors[i].view(n - f.offset);
                assert!(v.dot(&f.w_at(0, n)).abs() < 1e-8, "{id} V{i}·W1 at {n}");
            }
        }
        for n in f.window().start..f.window().end - 1 {
            let pushed = jacs.get(n) * f.v_at(0, n);
            let expected = f.v_at(0, n + 1) * f.z_at(0, n);
            let res = (pushed - expected).amax();
            assert!(res < 1e-8 * f.z_at(0, n), "{id} covariance at {n}: {res:e}");
        }
    }
}

#[test]
fn mean_log_stretch_matches_leading_exponent() {
    let m = Solenoid::default();
    let t = generate_trajectory(&m, 8, 42_000, 1000).unwrap();
    let jacs = JacobianSeries::along(&m, &t);
    let spec = lyapunov_spectrum(&m, &t, 3, 1).unwrap();
    let f = clv_frames(&jacs, &spec, 1, 1, ginelli_window(t.len(), 500, 500).unwrap()).unwrap();
    let est = f.mean_log_stretch(0);
    let sigma = est.stderr.hypot(spec.stderr[0]);
    assert!((est.value - spec.exponents[0]).abs() < 3.0 * sigma, "{est:?} vs {:?}", spec.exponents[0]);
    assert_abs_diff_eq!(spec.exponents[0], 2f64.ln(), epsilon = 5e-3);
}

#[test]
fn longer_spinups_do_not_move_converged_vectors() {
    let m = Solenoid::default();
    let t = generate_trajectory(&m, 9, 2000, 1000).unwrap();
    let jacs = JacobianSeries::along(&m, &t);
    let a = compute_clvs(&jacs, 3, 800..1200).unwrap();
    let b = compute_clvs(&jacs, 3, 400..1600).unwrap();
    for i in 0..3 {
        for n in 800..1200 {
            let va = a.vectors[i].view(n - 800);
            let vb = b.vectors[i].view(n - 400);
            assert!(1.0 - va.dot(&vb).abs() < 1e-10, "V{i} at {n}");
        }
    }
}

#[test]
fn split_reassembles_and_annihilates_adjoints() {
    let m = s3_core::maps::KuznetsovPlykin::default();
    let (t, _, f) = frames_for(&m, 10, 2000, 500, 1);
    let win = f.window();
    let mut x = VectorSeries::new(3);
    for n in win.clone() {
        x.push(perturbation_along(&m, &t, n, 1).unwrap().as_slice());
    }
    let split = split_perturbation(&x, &f).unwrap();
    for (k, n) in win.enumerate() {
        let sum = split.xu.get(k) + split.xs.get(k);
        assert!((sum - x.get(k)).amax() < 1e-14);
        assert!(split.xs.view(k).dot(&f.w_at(0, n)).abs() < 1e-12);
        let a = unstable_coefficient(x.slice(k), f.v_at(0, n).as_slice(), f.w_at(0, n).as_slice()).unwrap();
        assert_abs_diff_eq!(a, split.a[0][k], epsilon = 1e-14);
    }
}

#[test]
fn solenoid_core_shift_is_purely_stable() {
    let m = Solenoid::default();
    let (t, _, f) = frames_for(&m, 11, 2000, 500, 1);
    let mut x = VectorSeries::new(3);
    for n in f.window() {
        x.push(perturbation_along(&m, &t, n, 0).unwrap().as_slice());
    }
    let split = split_perturbation(&x, &f).unwrap();
    for k in 0..x.len() {
        let ratio = split.xu.get(k).norm() / x.get(k).norm();
        assert!(ratio < 1e-6, "step {k}: {ratio:e}");
    }
}

#[test]
fn equal_exponents_are_degenerate() {
    let jacs = JacobianSeries::from_matrices(2, &vec![DMatrix::from_diagonal_element(2, 2, 2.0); 200]);
    let spec = spectrum_from_jacobians(&jacs, 2, 1).unwrap();
    let err = spec.check_gaps(2).unwrap_err();
    assert!(matches!(err, S3Error::DegenerateSpectrum { .. }), "{err}");
}

#[test]
fn neutral_exponent_is_rejected() {
    let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 1.0]));
    let jacs = JacobianSeries::from_matrices(2, &vec![a; 200]);
    let spec = spectrum_from_jacobians(&jacs, 2, 1).unwrap();
    let err = spec.unstable_dim().unwrap_err();
    assert!(matches!(err, S3Error::DeadBand { i: 1, .. }), "{err}");
}

#[test]
fn constant_jacobian_gives_constant_frames() {
    let m = ToralAutomorphism::cat();
    let (_, _, f) = frames_for(&m, 12, 600, 150, 1);
    let n0 = f.window().start;
    for n in f.window() {
        assert!((f.v_at(0, n) - f.v_at(0, n0)).amax() < 1e-12);
        assert!((f.w_at(0, n) - f.w_at(0, n0)).amax() < 1e-12);
        assert_abs_diff_eq!(f.z_at(0, n), f.z_at(0, n0), epsilon = 1e-12);
    }
}
