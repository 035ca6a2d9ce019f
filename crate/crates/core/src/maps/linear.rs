use nalgebra::{DMatrix, DVector, Matrix2};

use crate::dynamics::{Axis, Chart, MapSystem, Params, State};
use crate::error::{Result, S3Error};

/// `u -> rate * u + s`, a globally attracting fixed point at `s / (1 - rate)`.
#[derive(Debug, Clone)]
pub struct AffineContraction {
    rate: f64,
    params: Params,
    chart: Chart,
}

impl AffineContraction {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.abs() < 1.0 && rate != 0.0) {
            return Err(S3Error::Config(format!(
                "contraction rate must satisfy 0 < |rate| < 1, got {rate}"
            )));
        }
        Ok(Self {
            rate,
            params: DVector::from_element(1, 0.0),
            chart: Chart::new(vec![Axis::bounded(-1.0, 1.0)]),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl MapSystem for AffineContraction {
    fn id(&self) -> &str {
        "linear1d"
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
        DVector::from_element(1, self.rate * u[0] + s[0])
    }

    fn jacobian(&self, _u: &State) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.rate)
    }

    fn param_derivative(&self, _prev: &State, _j: usize) -> State {
        DVector::from_element(1, 1.0)
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn has_analytic_param_field(&self) -> bool {
        true
    }

    fn inverse(&self, u: &State) -> Option<State> {
        Some(DVector::from_element(1, (u[0] - self.params[0]) / self.rate))
    }
}

/// Hyperbolic automorphism of the unit torus, `u -> A u + s c mod 1`, with
/// `A = [[k, 1], [k - 1, 1]]` so `det A = 1` and `tr A = k + 1`.
#[derive(Debug, Clone)]
pub struct ToralAutomorphism {
    matrix: Matrix2<f64>,
    shift: [f64; 2],
    params: Params,
    chart: Chart,
}

impl ToralAutomorphism {
    /// Arnold's cat map `[[2, 1], [1, 1]]`.
    pub fn cat() -> Self {
        Self::with_trace(3).expect("trace 3 is hyperbolic")
    }

    pub fn with_trace(trace: i64) -> Result<Self> {
        if trace.abs() <= 2 {
            return Err(S3Error::Config(format!(
                "toral map with trace {trace} is not hyperbolic"
            )));
        }
        let k = (trace - 1) as f64;
        Ok(Self {
            matrix: Matrix2::new(k, 1.0, k - 1.0, 1.0),
            shift: [1.0, 0.0],
            params: DVector::from_element(1, 0.0),
            chart: Chart::new(vec![Axis::periodic(0.0, 1.0), Axis::periodic(0.0, 1.0)]),
        })
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        self.matrix
    }
}

impl MapSystem for ToralAutomorphism {
    fn id(&self) -> &str {
        "cat2d"
    }

    fn dim(&self) -> usize {
        2
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
        let m = &self.matrix;
        DVector::from_vec(vec![
            m[(0, 0)] * u[0] + m[(0, 1)] * u[1] + s[0] * self.shift[0],
            m[(1, 0)] * u[0] + m[(1, 1)] * u[1] + s[0] * self.shift[1],
        ])
    }

    fn jacobian(&self, _u: &State) -> DMatrix<f64> {
        DMatrix::from_iterator(2, 2, self.matrix.iter().copied())
    }

    fn param_derivative(&self, _prev: &State, _j: usize) -> State {
        DVector::from_column_slice(&self.shift)
    }

    fn has_analytic_jacobian(&self) -> bool {
        true
    }

    fn has_analytic_param_field(&self) -> bool {
        true
    }

    fn inverse(&self, u: &State) -> Option<State> {
        let inv = self.matrix.try_inverse()?;
        let s = self.params[0];
        let w = nalgebra::Vector2::new(u[0] - s * self.shift[0], u[1] - s * self.shift[1]);
        let mut p = DVector::from_column_slice((inv * w).as_slice());
        self.chart.wrap(&mut p);
        Some(p)
    }
}

/// Constant-Jacobian test map: a 1-D affine contraction when `expansion` is
/// `None`, otherwise a toral automorphism with eigenvalues
/// `(expansion, contraction)`.
pub fn linear_test_map(contraction: f64, expansion: Option<f64>) -> Result<Box<dyn MapSystem>> {
    match expansion {
        None => Ok(Box::new(AffineContraction::new(contraction)?)),
        Some(lambda) => {
            if (lambda * contraction - 1.0).abs() > 1e-9 {
                return Err(S3Error::Config(
                    "toral map eigenvalues must multiply to 1".into(),
                ));
            }
            let trace = lambda + contraction;
            if (trace - trace.round()).abs() > 1e-9 {
                return Err(S3Error::Config(format!(
                    "toral map needs an integer trace, got {trace}"
                )));
            }
            Ok(Box::new(ToralAutomorphism::with_trace(trace.round() as i64)?))
        }
    }
}
