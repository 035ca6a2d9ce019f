//! Scalar objectives `J(u)` and their gradients, including piecewise-linear
//! nodal ("hat") families whose expectations measure local probability mass.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, S3Error};

/// A scalar function of the state with its gradient.
pub trait Objective: Send + Sync {
    fn value(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64]) -> DVector<f64>;
    fn label(&self) -> String;
}

impl fmt::Debug for dyn Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Objective({})", self.label())
    }
}

/// `J(u) = c`.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl Objective for Constant {
    fn value(&self, _u: &[f64]) -> f64 {
        self.0
    }

    fn gradient(&self, u: &[f64]) -> DVector<f64> {
        DVector::zeros(u.len())
    }

    fn label(&self) -> String {
        format!("const({})", self.0)
    }
}

/// Objective from a pair of closures.
pub struct FnObjective<F, G> {
    label: String,
    f: F,
    grad: G,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> DVector<f64> + Send + Sync,
{
    pub fn new(label: impl Into<String>, f: F, grad: G) -> Self {
        Self { label: label.into(), f, grad }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> DVector<f64> + Send + Sync,
{
    fn value(&self, u: &[f64]) -> f64 {
        (self.f)(u)
    }

    fn gradient(&self, u: &[f64]) -> DVector<f64> {
        (self.grad)(u)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Scalar coordinate read off a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    /// The i-th state component.
    Component(usize),
    /// Polar angle of a 3-vector, in `[0, π]`.
    Polar,
    /// Azimuth of a 3-vector, in `(-π, π]`.
    Azimuth,
}

impl Coordinate {
    pub fn value(&self, u: &[f64]) -> f64 {
        match *self {
            Coordinate::Component(i) => u[i],
            Coordinate::Polar => u[0].hypot(u[1]).atan2(u[2]),
            Coordinate::Azimuth => u[1].atan2(u[0]),
        }
    }

    pub fn gradient(&self, u: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(u.len());
        match *self {
            Coordinate::Component(i) => g[i] = 1.0,
            Coordinate::Polar => {
                let rho = u[0].hypot(u[1]);
                let r2 = rho * rho + u[2] * u[2];
                if rho > 0.0 {
                    g[0] = u[0] * u[2] / (rho * r2);
                    g[1] = u[1] * u[2] / (rho * r2);
                }
                g[2] = -rho / r2;
            }
            Coordinate::Azimuth => {
                let rho2 = u[0] * u[0] + u[1] * u[1];
                if rho2 > 0.0 {
                    g[0] = -u[1] / rho2;
                    g[1] = u[0] / rho2;
                }
            }
        }
        g
    }

    fn name(&self) -> String {
        match self {
            Coordinate::Component(i) => format!("u{i}"),
            Coordinate::Polar => "polar".into(),
            Coordinate::Azimuth => "azimuth".into(),
        }
    }
}

/// One axis of a nodal grid.
///
/// Periodic axes place `nodes` centres at spacing `(hi - lo) / nodes` and
/// measure distance by minimal image. Bounded axes place them at spacing
/// `(hi - lo) / (nodes - 1)` so the end nodes sit on `lo` and `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodalAxis {
    pub coordinate: Coordinate,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub periodic: bool,
}

impl NodalAxis {
    pub fn bounded(coordinate: Coordinate, lo: f64, hi: f64, nodes: usize) -> Self {
        Self { coordinate, lo, hi, nodes, periodic: false }
    }

    pub fn periodic(coordinate: Coordinate, lo: f64, hi: f64, nodes: usize) -> Self {
        Self { coordinate, lo, hi, nodes, periodic: true }
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.nodes as f64
        } else {
            (self.hi - self.lo) / (self.nodes - 1) as f64
        }
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.spacing()
    }

    fn offset(&self, x: f64, k: usize) -> f64 {
        let d = x - self.center(k);
        if self.periodic {
            let p = self.hi - self.lo;
            d - p * (d / p).round()
        } else {
            d
        }
    }

    /// Hat value and its derivative in the axis coordinate. The derivative at
    /// a kink is the left limit.
    pub fn hat(&self, x: f64, k: usize) -> (f64, f64) {
        let w = self.spacing();
        let d = self.offset(x, k);
        let value = (1.0 - d.abs() / w).max(0.0);
        let slope = if -w < d && d <= 0.0 {
            1.0 / w
        } else if 0.0 < d && d <= w {
            -1.0 / w
        } else {
            0.0
        };
        (value, slope)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < 2 || !(self.hi > self.lo) {
            return Err(S3Error::Config(format!(
                "nodal axis on {} needs hi > lo and at least 2 nodes",
                self.coordinate.name()
            )));
        }
        Ok(())
    }
}

/// Tensor-product hat functions on one or two axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalBasisFamily {
    pub axes: Vec<NodalAxis>,
}

impl NodalBasisFamily {
    pub fn new(axes: Vec<NodalAxis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(S3Error::Config("nodal family needs one or two axes".into()));
        }
        for a in &axes {
            a.validate()?;
        }
        Ok(Self { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis node indices of flat index `k`; the last axis varies fastest.
    pub fn node_indices(&self, k: usize) -> Vec<usize> {
        let mut rest = k;
        let mut idx = vec![0; self.axes.len()];
        for (slot, a) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = rest % a.nodes;
            rest /= a.nodes;
        }
        idx
    }

    pub fn node(&self, k: usize) -> Result<NodalBasis> {
        if k >= self.len() {
            return Err(S3Error::Config(format!(
                "node index {k} outside family of {}",
                self.len()
            )));
        }
        Ok(NodalBasis { axes: self.axes.clone(), index: self.node_indices(k) })
    }

    pub fn objectives(&self) -> Vec<Box<dyn Objective>> {
        (0..self.len())
            .map(|k| Box::new(self.node(k).expect("index in range")) as Box<dyn Objective>)
            .collect()
    }
}

/// Single hat function of a [`NodalBasisFamily`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodalBasis {
    axes: Vec<NodalAxis>,
    index: Vec<usize>,
}

impl Objective for NodalBasis {
    fn value(&self, u: &[f64]) -> f64 {
        self.axes
            .iter()
            .zip(&self.index)
            .map(|(a, &k)| a.hat(a.coordinate.value(u), k).0)
            .product()
    }

    fn gradient(&self, u: &[f64]) -> DVector<f64> {
        let hats: Vec<(f64, f64)> = self
            .axes
            .iter()
            .zip(&self.index)
            .map(|(a, &k)| a.hat(a.coordinate.value(u), k))
            .collect();
        let mut g = DVector::zeros(u.len());
        for (j, a) in self.axes.iter().enumerate() {
            let others: f64 = hats
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, h)| h.0)
                .product();
            if hats[j].1 != 0.0 && others != 0.0 {
                g += a.coordinate.gradient(u) * (hats[j].1 * others);
            }
        }
        g
    }

    fn label(&self) -> String {
        let parts: Vec<String> = self
            .axes
            .iter()
            .zip(&self.index)
            .map(|(a, &k)| format!("{}={:.4}", a.coordinate.name(), a.center(k)))
            .collect();
        format!("hat({})", parts.join(","))
    }
}

/// `(r, θ)` grid used for the solenoid: 4 radial by 4 angular nodes.
pub fn solenoid_r_theta_family() -> NodalBasisFamily {
    NodalBasisFamily::new(vec![
        NodalAxis::bounded(Coordinate::Component(0), 0.7, 2.1, 4),
        NodalAxis::periodic(Coordinate::Component(1), 0.0, 2.0 * PI, 4),
    ])
    .expect("valid grid")
}

/// 16 periodic nodes along the solenoid angle.
pub fn solenoid_theta_family() -> NodalBasisFamily {
    NodalBasisFamily::new(vec![NodalAxis::periodic(Coordinate::Component(1), 0.0, 2.0 * PI, 16)])
        .expect("valid grid")
}

/// 16 polar plus 16 azimuthal nodes on the unit sphere, returned as two families.
pub fn sphere_families() -> (NodalBasisFamily, NodalBasisFamily) {
    (
        NodalBasisFamily::new(vec![NodalAxis::bounded(Coordinate::Polar, 0.0, PI, 16)])
            .expect("valid grid"),
        NodalBasisFamily::new(vec![NodalAxis::periodic(Coordinate::Azimuth, -PI, PI, 16)])
            .expect("valid grid"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hat_is_one_at_its_node_and_zero_outside_support() {
        let fam = solenoid_theta_family();
        let node = fam.node(3).unwrap();
        let c = fam.axes[0].center(3);
        assert_eq!(node.value(&[1.0, c, 0.0]), 1.0);
        let w = fam.axes[0].spacing();
        assert_eq!(node.value(&[1.0, c + 1.5 * w, 0.0]), 0.0);
    }

    #[test]
    fn kink_gradient_is_left_limit() {
        let ax = NodalAxis::bounded(Coordinate::Component(0), 0.0, 1.0, 3);
        assert_relative_eq!(ax.hat(0.5, 1).1, 2.0);
        assert_relative_eq!(ax.hat(1.0, 1).1, -2.0);
        assert_eq!(ax.hat(0.0, 1).1, 0.0);
    }

    #[test]
    fn periodic_node_wraps_across_seam() {
        let fam = solenoid_theta_family();
        let node = fam.node(0).unwrap();
        let w = fam.axes[0].spacing();
        let inside = node.value(&[1.0, 2.0 * PI - 0.25 * w, 0.0]);
        assert_relative_eq!(inside, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn empty_or_oversized_family_rejected() {
        assert!(NodalBasisFamily::new(vec![]).is_err());
        let ax = NodalAxis::periodic(Coordinate::Component(0), 0.0, 1.0, 2);
        assert!(NodalBasisFamily::new(vec![ax; 3]).is_err());
        assert!(NodalBasisFamily::new(vec![NodalAxis::bounded(Coordinate::Component(0), 0.0, 1.0, 1)])
            .is_err());
    }

    #[test]
    fn flat_index_order_has_last_axis_fastest() {
        let fam = solenoid_r_theta_family();
        assert_eq!(fam.node_indices(0), vec![0, 0]);
        assert_eq!(fam.node_indices(1), vec![0, 1]);
        assert_eq!(fam.node_indices(4), vec![1, 0]);
        assert_eq!(fam.node_indices(15), vec![3, 3]);
    }

    #[test]
    fn polar_and_azimuth_gradients_match_differences() {
        let u = [0.3, -0.5, 0.6];
        for c in [Coordinate::Polar, Coordinate::Azimuth] {
            let g = c.gradient(&u);
            for k in 0..3 {
                let mut a = u;
                let mut b = u;
                a[k] += 1e-6;
                b[k] -= 1e-6;
                let fd = (c.value(&a) - c.value(&b)) / 2e-6;
                assert_relative_eq!(g[k], fd, epsilon = 1e-8);
            }
        }
    }
}
