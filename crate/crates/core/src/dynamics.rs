//! Parameterised maps, orbits, and tangent propagation.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, S3Error};

pub type State = DVector<f64>;
pub type Params = DVector<f64>;

/// Default number of steps discarded before recording.
pub const DEFAULT_SPINUP: usize = 1000;
/// Step used by finite-difference Jacobians and parameter derivatives.
pub const FD_STEP: f64 = 1e-6;

/// One coordinate of a map's chart. Periodic axes live in `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

impl Axis {
    pub fn bounded(lo: f64, hi: f64) -> Self {
        Self { lo, hi, periodic: false }
    }

    pub fn periodic(lo: f64, hi: f64) -> Self {
        Self { lo, hi, periodic: true }
    }

    pub fn period(&self) -> Option<f64> {
        self.periodic.then(|| self.hi - self.lo)
    }
}

/// Coordinate chart: per-axis sampling box and periodicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub axes: Vec<Axis>,
}

impl Chart {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Moves periodic coordinates into their principal range.
    pub fn wrap(&self, u: &mut State) {
        for (x, ax) in u.iter_mut().zip(&self.axes) {
            if let Some(p) = ax.period() {
                let mut w = (*x - ax.lo).rem_euclid(p) + ax.lo;
                // rem_euclid can round up to exactly p
                if w >= ax.hi {
                    w = ax.lo;
                }
                *x = w;
            }
        }
    }

    /// `a - b` using the minimal image on periodic axes.
    pub fn diff(&self, a: &[f64], b: &[f64]) -> State {
        DVector::from_iterator(
            a.len(),
            a.iter().zip(b).zip(&self.axes).map(|((x, y), ax)| {
                let d = x - y;
                match ax.period() {
                    Some(p) => d - p * (d / p).round(),
                    None => d,
                }
            }),
        )
    }
}

/// A parameterised map `u -> φ^s(u)` with its tangent data.
///
/// `jacobian` and `param_derivative` are taken at the reference parameters.
/// `param_derivative(prev, j)` is `∂φ/∂s_j` evaluated at `prev`, so along an
/// orbit the perturbation field at `u_n` is `param_derivative(u_{n-1}, j)`.
pub trait MapSystem: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn param_count(&self) -> usize;
    fn reference_params(&self) -> &Params;
    fn chart(&self) -> &Chart;

    /// Raw evaluation; wrapping and projection are applied by [`step`].
    fn apply(&self, u: &State, s: &Params) -> State;

    fn jacobian(&self, u: &State) -> DMatrix<f64> {
        fd_jacobian(self, u)
    }

    fn param_derivative(&self, prev: &State, j: usize) -> State {
        fd_param_derivative(self, prev, j)
    }

    fn has_analytic_jacobian(&self) -> bool {
        false
    }

    fn has_analytic_param_field(&self) -> bool {
        false
    }

    fn is_invertible(&self) -> bool {
        true
    }

    /// Preimage under the reference map, where a closed form exists.
    fn inverse(&self, _u: &State) -> Option<State> {
        None
    }

    fn in_domain(&self, u: &State) -> bool {
        u.iter().all(|x| x.is_finite())
    }

    /// Pulls a state back onto the constraint manifold, if the map has one.
    fn project(&self, _u: &mut State) {}

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> State {
        let axes = &self.chart().axes;
        DVector::from_iterator(axes.len(), axes.iter().map(|a| rng.gen_range(a.lo..a.hi)))
    }
}

pub fn fd_jacobian<M: MapSystem + ?Sized>(map: &M, u: &State) -> DMatrix<f64> {
    let d = map.dim();
    let s = map.reference_params();
    let mut jac = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut up = u.clone();
        let mut dn = u.clone();
        up[k] += FD_STEP;
        dn[k] -= FD_STEP;
        let col = map.chart().diff(map.apply(&up, s).as_slice(), map.apply(&dn, s).as_slice())
            / (2.0 * FD_STEP);
        jac.set_column(k, &col);
    }
    jac
}

pub fn fd_param_derivative<M: MapSystem + ?Sized>(map: &M, prev: &State, j: usize) -> State {
    let mut sp = map.reference_params().clone();
    let mut sm = sp.clone();
    sp[j] += FD_STEP;
    sm[j] -= FD_STEP;
    map.chart()
        .diff(map.apply(prev, &sp).as_slice(), map.apply(prev, &sm).as_slice())
        / (2.0 * FD_STEP)
}

/// One application of the map with wrapping, projection and domain checks.
pub fn step<M: MapSystem + ?Sized>(map: &M, u: &State, s: &Params) -> Result<State> {
    let mut v = map.apply(u, s);
    if !v.iter().all(|x| x.is_finite()) {
        return Err(S3Error::NonFinite { map: map.id().to_string(), step: 0 });
    }
    map.chart().wrap(&mut v);
    if !map.in_domain(&v) {
        return Err(S3Error::ChartExit { map: map.id().to_string(), step: 0 });
    }
    map.project(&mut v);
    Ok(v)
}

fn at_step(err: S3Error, n: usize) -> S3Error {
    match err {
        S3Error::NonFinite { map, .. } => S3Error::NonFinite { map, step: n },
        S3Error::ChartExit { map, .. } => S3Error::ChartExit { map, step: n },
        other => other,
    }
}

/// Perturbation field `X(u) = ∂_s φ(φ^{-1}(u))` at an arbitrary point, for
/// maps with a closed-form inverse.
pub fn perturbation_field<M: MapSystem + ?Sized>(map: &M, u: &State, j: usize) -> Result<State> {
    let prev = map.inverse(u).ok_or_else(|| {
        S3Error::Unsupported(format!("map `{}` has no closed-form inverse", map.id()))
    })?;
    Ok(map.param_derivative(&prev, j))
}

/// Fixed-dimension sequence of vectors stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSeries {
    dim: usize,
    data: Vec<f64>,
}

impl VectorSeries {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, len: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * len) }
    }

    pub fn zeros(dim: usize, len: usize) -> Self {
        Self { dim, data: vec![0.0; dim * len] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.dim, "vector dimension mismatch");
        self.data.extend_from_slice(v);
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn view(&self, n: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(self.slice(n), self.dim)
    }

    pub fn get(&self, n: usize) -> DVector<f64> {
        DVector::from_column_slice(self.slice(n))
    }

    pub fn set(&mut self, n: usize, v: &[f64]) {
        self.slice_mut(n).copy_from_slice(v);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }
}

/// Recorded orbit `u_0 .. u_{N-1}` of a map at its reference parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub map_id: String,
    pub seed: u64,
    pub spinup: usize,
    states: VectorSeries,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.dim()
    }

    pub fn state(&self, n: usize) -> State {
        self.states.get(n)
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        self.states.slice(n)
    }

    pub fn states(&self) -> &VectorSeries {
        &self.states
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.states.iter()
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seeded initial draw followed by `spinup` discarded steps.
pub fn spun_up_state<M: MapSystem + ?Sized>(
    map: &M,
    s: &Params,
    seed: u64,
    spinup: usize,
) -> Result<State> {
    let mut rng = seeded_rng(seed);
    let mut u = map.sample_initial(&mut rng);
    map.chart().wrap(&mut u);
    map.project(&mut u);
    for n in 0..spinup {
        u = step(map, &u, s).map_err(|e| at_step(e, n))?;
    }
    Ok(u)
}

pub fn generate_trajectory<M: MapSystem + ?Sized>(
    map: &M,
    seed: u64,
    len: usize,
    spinup: usize,
) -> Result<Trajectory> {
    if len == 0 {
        return Err(S3Error::Config("trajectory length must be at least 1".into()));
    }
    let s = map.reference_params();
    let mut u = spun_up_state(map, s, seed, spinup)?;
    let mut states = VectorSeries::with_capacity(map.dim(), len);
    states.push(u.as_slice());
    for n in 1..len {
        u = step(map, &u, s).map_err(|e| at_step(e, spinup + n))?;
        states.push(u.as_slice());
    }
    Ok(Trajectory {
        map_id: map.id().to_string(),
        seed,
        spinup,
        states,
    })
}

/// Streaming orbit at arbitrary parameters; yields successive images of `u0`.
pub struct Orbit<'a, M: MapSystem + ?Sized> {
    map: &'a M,
    params: Params,
    state: State,
    n: usize,
}

impl<'a, M: MapSystem + ?Sized> Orbit<'a, M> {
    pub fn new(map: &'a M, params: Params, u0: State) -> Self {
        Self { map, params, state: u0, n: 0 }
    }
}

impl<M: MapSystem + ?Sized> Iterator for Orbit<'_, M> {
    type Item = Result<State>;

    fn next(&mut self) -> Option<Self::Item> {
        let next = step(self.map, &self.state, &self.params).map_err(|e| at_step(e, self.n));
        self.n += 1;
        match next {
            Ok(v) => {
                self.state = v.clone();
                Some(Ok(v))
            }
            Err(e) => Some(Err(e)),
        }
    }
}

/// `T(u_start, n) v`: forward pushes use Jacobians along the orbit, negative
/// `n` solves with the Jacobians of the preceding states.
pub fn tangent_push<M: MapSystem + ?Sized>(
    map: &M,
    traj: &Trajectory,
    start: usize,
    v: &State,
    n: isize,
) -> Result<State> {
    let end = start as isize + n;
    if end < 0 || end >= traj.len() as isize || start >= traj.len() {
        return Err(S3Error::OutOfRange { index: end, len: traj.len() });
    }
    let mut w = v.clone();
    if n >= 0 {
        for k in start..end as usize {
            w = map.jacobian(&traj.state(k)) * w;
        }
    } else {
        if !map.is_invertible() {
            return Err(S3Error::NotInvertible { map: map.id().to_string() });
        }
        for k in (end as usize..start).rev() {
            let jac = map.jacobian(&traj.state(k));
            w = jac.lu().solve(&w).ok_or(S3Error::SingularJacobian { step: k })?;
        }
    }
    Ok(w)
}

/// Perturbation field along a recorded orbit, `X(u_n) = ∂_s φ(u_{n-1})`.
pub fn perturbation_along<M: MapSystem + ?Sized>(
    map: &M,
    traj: &Trajectory,
    n: usize,
    j: usize,
) -> Result<State> {
    if n == 0 || n >= traj.len() {
        return Err(S3Error::OutOfRange { index: n as isize - 1, len: traj.len() });
    }
    let x = map.param_derivative(&traj.state(n - 1), j);
    if !x.iter().all(|c| c.is_finite()) {
        return Err(S3Error::NonFinite { map: map.id().to_string(), step: n });
    }
    Ok(x)
}
