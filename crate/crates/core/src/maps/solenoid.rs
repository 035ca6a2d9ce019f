use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{Axis, Chart, MapSystem, Params, State};

/// Smale-Williams solenoid in cylindrical coordinates `(r, θ, z)`:
///
/// ```text
/// r' = s1 + (r - s1) / 4 + cos θ / 2
/// θ' = 2θ + (s2 / 4) sin 2θ         (mod 2π)
/// z' = z / 4 + sin θ / 2
/// ```
///
/// `s1` moves the core circle of the torus and perturbs only the stable
/// directions; `s2` modulates the angular doubling. The angular forcing uses
/// `sin 2θ`, which is smooth on the circle.
#[derive(Debug, Clone)]
pub struct Solenoid {
    params: Params,
    chart: Chart,
}

impl Default for Solenoid {
    fn default() -> Self {
        Self::new(1.4, 0.0)
    }
}

impl Solenoid {
    pub fn new(s1: f64, s2: f64) -> Self {
        Self {
            params: DVector::from_vec(vec![s1, s2]),
            chart: Chart::new(vec![
                Axis::bounded(s1 - 0.6, s1 + 0.6),
                Axis::periodic(0.0, TAU),
                Axis::bounded(-0.6, 0.6),
            ]),
        }
    }
}

impl MapSystem for Solenoid {
    fn id(&self) -> &str {
        "solenoid"
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
        let (r, th, z) = (u[0], u[1], u[2]);
        let (sin, cos) = th.sin_cos();
        DVector::from_vec(vec![
            s[0] + (r - s[0]) / 4.0 + cos / 2.0,
            2.0 * th + s[1] / 4.0 * (2.0 * th).sin(),
            z / 4.0 + sin / 2.0,
        ])
    }

    fn jacobian(&self, u: &State) -> DMatrix<f64> {
        let (sin, cos) = u[1].sin_cos();
        let s2 = self.params[1];
        DMatrix::from_row_slice(
            3,
            3,
            &[
                0.25, -sin / 2.0, 0.0,
                0.0, 2.0 + s2 / 2.0 * (2.0 * u[1]).cos(), 0.0,
                0.0, cos / 2.0, 0.25,
            ],
        )
    }

    fn param_derivative(&self, prev: &State, j: usize) -> State {
        match j {
            0 => DVector::from_vec(vec![0.75, 0.0, 0.0]),
            1 => DVector::from_vec(vec![0.0, (2.0 * prev[1]).sin() / 4.0, 0.0]),
            _ => panic!("solenoid has two parameters, got index {j}"),
        }
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn has_analytic_param_field(&self) -> bool {
        true
    }

    fn in_domain(&self, u: &State) -> bool {
        u.iter().all(|x| x.is_finite()) && (u[0] - self.params[0]).abs() < 10.0 && u[2].abs() < 10.0
    }
}
