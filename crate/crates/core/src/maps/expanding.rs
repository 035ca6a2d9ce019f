use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{Axis, Chart, MapSystem, Params, State};
use crate::error::{Result, S3Error};

/// Perturbed doubling map `x -> 2x + s sin(2πx) / (2π) mod 1`.
///
/// Uniformly expanding for `|s| < 1`. At `s = 0` Lebesgue measure is
/// invariant. The map is two-to-one, so backward tangent pushes are refused.
#[derive(Debug, Clone)]
pub struct ExpandingCircle {
    params: Params,
    chart: Chart,
}

impl Default for ExpandingCircle {
    fn default() -> Self {
        Self::new(0.0).expect("s = 0 is expanding")
    }
}

impl ExpandingCircle {
    pub fn new(s: f64) -> Result<Self> {
        if s.abs() >= 1.0 {
            return Err(S3Error::Config(format!(
                "expanding circle map needs |s| < 1, got {s}"
            )));
        }
        Ok(Self {
            params: DVector::from_element(1, s),
            chart: Chart::new(vec![Axis::periodic(0.0, 1.0)]),
        })
    }

    pub fn s(&self) -> f64 {
        self.params[0]
    }

    /// `φ'(x)` at the reference parameter.
    pub fn slope(&self, x: f64) -> f64 {
        2.0 + self.s() * (TAU * x).cos()
    }

    /// `d/dx (1 / φ'(x))`.
    pub fn inverse_slope_derivative(&self, x: f64) -> f64 {
        let d = self.slope(x);
        self.s() * TAU * (TAU * x).sin() / (d * d)
    }

    /// Perturbation field value at `φ(prev)` along the orbit branch through `prev`.
    pub fn field(&self, prev: f64) -> f64 {
        (TAU * prev).sin() / TAU
    }

    /// Derivative of the perturbation field at `φ(prev)` along the same branch.
    pub fn field_derivative(&self, prev: f64) -> f64 {
        (TAU * prev).cos() / self.slope(prev)
    }

    /// Invariant density and its derivative, known in closed form only at `s = 0`.
    pub fn density(&self, _x: f64) -> Option<(f64, f64)> {
        (self.s() == 0.0).then_some((1.0, 0.0))
    }
}

/// Deterministic jitter of a few units in the last place of numbers in
/// `[1, 2)`, keyed on the bits of `x`.
///
/// Doubling is exact in binary floating point, so without it every orbit
/// loses one mantissa bit per step and lands on the fixed point after about
/// 53 iterations.
fn round_off_jitter(x: f64) -> f64 {
    let mut z = x.to_bits().wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ((z >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 4.0 * f64::EPSILON
}

impl MapSystem for ExpandingCircle {
    fn id(&self) -> &str {
        "expanding1d"
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_count(&self) -> usize {
        1
    }

    fn reference_params(&self) -> &Params {
        &self.params
    }

    fn chart(&self) -> &Chart {
        &self.chart
    }

    fn apply(&self, u: &State, s: &Params) -> State {
        let x = u[0];
        let y = 2.0 * x + s[0] * (TAU * x).sin() / TAU;
        DVector::from_element(1, y + round_off_jitter(x))
    }

    fn jacobian(&self, u: &State) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.slope(u[0]))
    }

    fn param_derivative(&self, prev: &State, _j: usize) -> State {
        DVector::from_element(1, self.field(prev[0]))
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn has_analytic_param_field(&self) -> bool {
        true
    }

    fn is_invertible(&self) -> bool {
        false
    }
}
