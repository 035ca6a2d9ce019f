#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use s3_core::dynamics::{MapSystem, State};
use s3_core::objectives::{FnObjective, Objective};

/// `J(x) = cos 2πx` on the unit circle.
pub fn cos_objective() -> Box<dyn Objective> {
    Box::new(FnObjective::new(
        "cos(2πx)",
        |u: &[f64]| (2.0 * PI * u[0]).cos(),
        |u: &[f64]| DVector::from_element(1, -2.0 * PI * (2.0 * PI * u[0]).sin()),
    ))
}

/// `J(u) = u_i`.
pub fn component_objective(i: usize, d: usize) -> Box<dyn Objective> {
    Box::new(FnObjective::new(
        format!("u{i}"),
        move |u: &[f64]| u[i],
        move |_: &[f64]| {
            let mut g = DVector::zeros(d);
            g[i] = 1.0;
            g
        },
    ))
}

/// Central-difference Jacobian of `map.apply` at the reference parameters,
/// written independently of the library's own helper.
pub fn central_jacobian(map: &dyn MapSystem, u: &State, h: f64) -> DMatrix<f64> {
    let d = map.dim();
    let s = map.reference_params();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut up = u.clone();
        let mut dn = u.clone();
        up[j] += h;
        dn[j] -= h;
        let col = (map.apply(&up, s) - map.apply(&dn, s)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Central difference of `map.apply` in parameter `j`.
pub fn central_param_derivative(map: &dyn MapSystem, prev: &State, j: usize, h: f64) -> State {
    let mut sp = map.reference_params().clone();
    let mut sm = sp.clone();
    sp[j] += h;
    sm[j] -= h;
    (map.apply(prev, &sp) - map.apply(prev, &sm)) / (2.0 * h)
}

/// `⟨cos 2πx⟩` under the invariant density of `x -> 2x + s sin(2πx)/(2π)`,
/// from a Fourier-Galerkin truncation of the transfer operator with
/// `L_{kj} = ∫ exp(-2πik T(x)) exp(2πijx) dx` on `modes` harmonics each side.
pub fn spectral_mean_cos(s: f64, modes: usize, quadrature: usize) -> f64 {
    let k = modes as i64;
    let size = 2 * modes + 1;
    let xs: Vec<f64> = (0..quadrature).map(|q| (q as f64 + 0.5) / quadrature as f64).collect();
    let ts: Vec<f64> = xs.iter().map(|&x| 2.0 * x + s * (2.0 * PI * x).sin() / (2.0 * PI)).collect();
    let mut l = DMatrix::<Complex<f64>>::zeros(size, size);
    for (a, kk) in (-k..=k).enumerate() {
        for (b, jj) in (-k..=k).enumerate() {
            let mut acc = Complex::new(0.0, 0.0);
            for (x, t) in xs.iter().zip(&ts) {
                let phase = 2.0 * PI * (jj as f64 * x - kk as f64 * t);
                acc += Complex::new(phase.cos(), phase.sin());
            }
            l[(a, b)] = acc / quadrature as f64;
        }
    }
    // ρ̂_0 = 1; remaining coefficients from (I - L) ρ̂ = 0 off the constant mode
    let center = modes;
    let others: Vec<usize> = (0..size).filter(|&i| i != center).collect();
    let n = others.len();
    let mut m = DMatrix::<Complex<f64>>::identity(n, n);
    let mut rhs = DVector::<Complex<f64>>::zeros(n);
    for (r, &a) in others.iter().enumerate() {
        for (c, &b) in others.iter().enumerate() {
            m[(r, c)] -= l[(a, b)];
        }
        rhs[r] = l[(a, center)];
    }
    let rho = m.lu().solve(&rhs).expect("transfer operator system is regular");
    // ∫ cos(2πx) ρ = Re ρ̂_1, stored right after the constant mode
    rho[center].re
}

/// `d⟨cos 2πx⟩/ds` by a central difference of the spectral means.
pub fn spectral_sensitivity(s: f64) -> f64 {
    let ds = 1e-4;
    (spectral_mean_cos(s + ds, 24, 1024) - spectral_mean_cos(s - ds, 24, 1024)) / (2.0 * ds)
}

/// Reference `d⟨cos 2πx⟩/ds` at `s = 0.3`, frozen from [`spectral_sensitivity`].
pub const EXPANDING_REFERENCE: f64 = 0.063_338_836_95;
pub const EXPANDING_S: f64 = 0.3;
