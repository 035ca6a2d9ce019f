use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{Axis, Chart, MapSystem, Params, State};

/// Radial contraction of the ambient extension off the unit sphere.
pub const RADIAL_RATE: f64 = 0.1;
const DRIFT_RENORMALIZE: f64 = 1e-9;
const DRIFT_FAIL: f64 = 1e-6;

/// Kuznetsov-type map of the unit sphere carrying a Plykin attractor.
///
/// One iteration composes four sphere-preserving stages on `(x, y, z)`:
///
/// 1. squeeze `(x, y)` towards the y-axis, `x *= e c`, `y *= c`, with
///    `e = exp(-ε (x² + y²))` and `c` restoring `x² + y²`;
/// 2. rotate `(x, y)` about z by `μ π (z / √2 + 1/2)`;
/// 3. the same squeeze on `(z, y)`, shrinking z;
/// 4. rotate `(y, z)` about x by `-μ π (x / √2 + 1/2)`.
///
/// Parameters are `[ε, μ]`; `μ` scales both rotation rates and equals 1 at the
/// reference point. Off the sphere the map is extended as
/// `u -> (1 + κ(|u| - 1)) F(u / |u|)`, which contracts the radial direction by
/// `κ = RADIAL_RATE` and leaves the sphere dynamics untouched.
#[derive(Debug, Clone)]
pub struct KuznetsovPlykin {
    params: Params,
    chart: Chart,
}

impl Default for KuznetsovPlykin {
    fn default() -> Self {
        Self::new(1.0, 1.0)
    }
}

/// Stage output with its state Jacobian and the two parameter derivatives.
struct Stage {
    out: Vector3<f64>,
    jac: Matrix3<f64>,
    d_eps: Vector3<f64>,
    d_mu: Vector3<f64>,
}

fn squeeze(u: &Vector3<f64>, p: usize, q: usize, eps: f64) -> Stage {
    let (a, b) = (u[p], u[q]);
    let r2 = a * a + b * b;
    let mut out = *u;
    let mut jac = Matrix3::identity();
    let mut d_eps = Vector3::zeros();
    if r2 < 1e-300 {
        return Stage { out, jac, d_eps, d_mu: Vector3::zeros() };
    }
    let e = (-eps * r2).exp();
    let e2 = e * e;
    let dd = a * a * e2 + b * b;
    let c = (r2 / dd).sqrt();
    let dd_da = 2.0 * a * e2 - 4.0 * eps * a * a * a * e2;
    let dd_db = 2.0 * b - 4.0 * eps * a * a * b * e2;
    let dl_da = a / r2 - dd_da / (2.0 * dd);
    let dl_db = b / r2 - dd_db / (2.0 * dd);
    let dl_deps = a * a * r2 * e2 / dd;
    out[p] = a * e * c;
    out[q] = b * c;
    jac[(p, p)] = e * c * (1.0 - 2.0 * eps * a * a + a * dl_da);
    jac[(p, q)] = a * e * c * (-2.0 * eps * b + dl_db);
    jac[(q, p)] = b * c * dl_da;
    jac[(q, q)] = c * (1.0 + b * dl_db);
    d_eps[p] = a * e * c * (-r2 + dl_deps);
    d_eps[q] = b * c * dl_deps;
    Stage { out, jac, d_eps, d_mu: Vector3::zeros() }
}

/// Rotation of the `(p, q)` plane by `σ μ π (w / √2 + 1/2)`.
fn rotate(u: &Vector3<f64>, p: usize, q: usize, w: usize, sense: f64, mu: f64) -> Stage {
    let phase = w_phase(u[w]);
    let angle = sense * mu * PI * phase;
    let (sin, cos) = angle.sin_cos();
    let (a, b) = (u[p], u[q]);
    let mut out = *u;
    out[p] = a * cos + b * sin;
    out[q] = -a * sin + b * cos;
    let mut jac = Matrix3::identity();
    jac[(p, p)] = cos;
    jac[(p, q)] = sin;
    jac[(q, p)] = -sin;
    jac[(q, q)] = cos;
    let da_dw = sense * mu * PI * FRAC_1_SQRT_2;
    jac[(p, w)] = da_dw * out[q];
    jac[(q, w)] = -da_dw * out[p];
    let da_dmu = sense * PI * phase;
    let mut d_mu = Vector3::zeros();
    d_mu[p] = da_dmu * out[q];
    d_mu[q] = -da_dmu * out[p];
    Stage { out, jac, d_eps: Vector3::zeros(), d_mu }
}

fn w_phase(w: f64) -> f64 {
    w * FRAC_1_SQRT_2 + 0.5
}

impl KuznetsovPlykin {
    pub fn new(eps: f64, mu: f64) -> Self {
        Self {
            params: DVector::from_vec(vec![eps, mu]),
            chart: Chart::new(vec![Axis::bounded(-1.0, 1.0); 3]),
        }
    }

    /// Sphere map with its Jacobian and parameter derivatives, at `(ε, μ)`.
    fn sphere_map(&self, u: &Vector3<f64>, eps: f64, mu: f64) -> Stage {
        let stages: [&dyn Fn(&Vector3<f64>) -> Stage; 4] = [
            &|v| squeeze(v, 0, 1, eps),
            &|v| rotate(v, 0, 1, 2, 1.0, mu),
            &|v| squeeze(v, 2, 1, eps),
            &|v| rotate(v, 1, 2, 0, -1.0, mu),
        ];
        let mut acc = Stage {
            out: *u,
            jac: Matrix3::identity(),
            d_eps: Vector3::zeros(),
            d_mu: Vector3::zeros(),
        };
        for stage in stages {
            let st = stage(&acc.out);
            acc.jac = st.jac * acc.jac;
            acc.d_eps = st.jac * acc.d_eps + st.d_eps;
            acc.d_mu = st.jac * acc.d_mu + st.d_mu;
            acc.out = st.out;
        }
        acc
    }

    fn sphere_only(&self, u: &Vector3<f64>, eps: f64, mu: f64) -> Vector3<f64> {
        let mut v = squeeze(u, 0, 1, eps).out;
        v = rotate(&v, 0, 1, 2, 1.0, mu).out;
        v = squeeze(&v, 2, 1, eps).out;
        rotate(&v, 1, 2, 0, -1.0, mu).out
    }
}

fn to3(u: &State) -> Vector3<f64> {
    Vector3::new(u[0], u[1], u[2])
}

impl MapSystem for KuznetsovPlykin {
    fn id(&self) -> &str {
        "plykin"
    }

    fn dim(&self) -> usize {
        3
    }

    fn param_count(&self) -> usize {
        2
    }

    fn reference_params(&self) -> &Params {
        &self.params
    }

    fn chart(&self) -> &Chart {
        &self.chart
    }

    fn apply(&self, u: &State, s: &Params) -> State {
        let v = to3(u);
        let r = v.norm();
        let img = self.sphere_only(&(v / r), s[0], s[1]) * (1.0 + RADIAL_RATE * (r - 1.0));
        DVector::from_column_slice(img.as_slice())
    }

    fn jacobian(&self, u: &State) -> DMatrix<f64> {
        let v = to3(u);
        let r = v.norm();
        let hat = v / r;
        let st = self.sphere_map(&hat, self.params[0], self.params[1]);
        let scale = 1.0 + RADIAL_RATE * (r - 1.0);
        let tangential = (Matrix3::identity() - hat * hat.transpose()) / r;
        let jac = st.out * hat.transpose() * RADIAL_RATE + st.jac * tangential * scale;
        DMatrix::from_column_slice(3, 3, jac.as_slice())
    }

    fn param_derivative(&self, prev: &State, j: usize) -> State {
        let v = to3(prev);
        let r = v.norm();
        let st = self.sphere_map(&(v / r), self.params[0], self.params[1]);
        let scale = 1.0 + RADIAL_RATE * (r - 1.0);
        let d = match j {
            0 => st.d_eps,
            1 => st.d_mu,
            _ => panic!("plykin map has two parameters, got index {j}"),
        };
        DVector::from_column_slice((d * scale).as_slice())
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn has_analytic_param_field(&self) -> bool {
        true
    }

    fn in_domain(&self, u: &State) -> bool {
        u.iter().all(|x| x.is_finite()) && (u.norm() - 1.0).abs() < DRIFT_FAIL
    }

    fn project(&self, u: &mut State) {
        let r = u.norm();
        if (r - 1.0).abs() > DRIFT_RENORMALIZE {
            *u /= r;
        }
    }

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> State {
        loop {
            let v: Vector3<f64> = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return DVector::from_column_slice((v / n).as_slice());
            }
        }
    }
}
