//! Lyapunov spectra, covariant Lyapunov vectors (tangent and adjoint) and the
//! oblique split of a perturbation field into stable and unstable parts.
//!
//! CLVs are computed with the forward-QR / backward-triangular scheme of
//! Ginelli and coworkers. Orientation: at the first window step the
//! largest-magnitude component of each tangent vector is positive, and every
//! later step inherits the orientation carried by the cocycle, so stretch
//! factors are positive and `T(u_n, 1) V_n = z_n V_{n+1}` holds with signs.
//! Adjoint vectors are oriented so that `V^i · W^i > 0`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{seeded_rng, MapSystem, Trajectory, VectorSeries};
use crate::error::{Result, S3Error};
use crate::stats::{batch_estimate, DEFAULT_BATCHES};

/// Exponents with |λ| at or below this are neither stable nor unstable.
pub const DEAD_BAND: f64 = 1e-3;
/// Minimum separation between exponents that must be resolved.
pub const MIN_GAP: f64 = 1e-3;
/// Smallest admissible |R_ii| during QR propagation.
pub const MIN_R_DIAGONAL: f64 = 1e-14;
/// Smallest admissible |V^i · W^i|.
pub const MIN_ANGLE: f64 = 1e-8;
/// Default forward and backward Ginelli spinups.
pub const DEFAULT_GINELLI_SPINUP: usize = 500;
/// QR steps discarded while the random initial frame aligns, capped at a
/// tenth of the trajectory.
pub const QR_TRANSIENT: usize = 100;

/// Jacobians `Dφ(u_t)` along a trajectory, stored contiguously.
#[derive(Debug, Clone)]
pub struct JacobianSeries {
    dim: usize,
    data: Vec<f64>,
}

impl JacobianSeries {
    /// Jacobians at states `0..traj.len()`.
    pub fn along<M: MapSystem + ?Sized>(map: &M, traj: &Trajectory) -> Self {
        let d = map.dim();
        let mut data = vec![0.0; d * d * traj.len()];
        data.par_chunks_mut(d * d).enumerate().for_each(|(t, chunk)| {
            chunk.copy_from_slice(map.jacobian(&traj.state(t)).as_slice());
        });
        Self { dim: d, data }
    }

    pub fn from_matrices(dim: usize, mats: &[DMatrix<f64>]) -> Self {
        let mut data = Vec::with_capacity(dim * dim * mats.len());
        for m in mats {
            assert_eq!(m.shape(), (dim, dim));
            data.extend_from_slice(m.as_slice());
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.dim * self.dim).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, t: usize) -> DMatrix<f64> {
        let n = self.dim * self.dim;
        DMatrix::from_column_slice(self.dim, self.dim, &self.data[t * n..(t + 1) * n])
    }

    /// `Dφ(u_t) v` without materialising the matrix.
    pub fn apply(&self, t: usize, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let m = &self.data[t * d * d..(t + 1) * d * d];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, &vc) in v.iter().enumerate() {
            for (r, o) in out.iter_mut().enumerate() {
                *o += m[c * d + r] * vc;
            }
        }
    }
}

/// Lyapunov exponents in decreasing order with batch-means standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Spectrum {
    /// Number of exponents above the dead band. Exponents inside it are an error.
    pub fn unstable_dim(&self) -> Result<usize> {
        for (i, &l) in self.exponents.iter().enumerate() {
            if l.abs() <= DEAD_BAND {
                return Err(S3Error::DeadBand { i, value: l });
            }
        }
        Ok(self.exponents.iter().filter(|&&l| l > DEAD_BAND).count())
    }

    /// Gap check on the leading `count` exponents.
    pub fn check_gaps(&self, count: usize) -> Result<()> {
        let count = count.min(self.exponents.len());
        for i in 1..count {
            let gap = (self.exponents[i - 1] - self.exponents[i]).abs();
            if gap < MIN_GAP {
                return Err(S3Error::DegenerateSpectrum { i: i - 1, j: i, gap });
            }
        }
        Ok(())
    }
}

fn initial_frame(d: usize, k: usize) -> DMatrix<f64> {
    let mut rng = seeded_rng(0x5eed_c1f5);
    let m = DMatrix::from_fn(d, k, |_, _| rng.gen_range(-1.0..1.0));
    thin_qr(m).0
}

/// Thin QR by modified Gram-Schmidt with one reorthogonalisation pass.
/// `R` has a non-negative diagonal, and a column that already lies along a
/// coordinate axis stays exactly on it.
pub fn thin_qr(mut a: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = a.ncols();
    let mut r = DMatrix::zeros(k, k);
    for j in 0..k {
        for _ in 0..2 {
            for i in 0..j {
                let p = a.column(i).dot(&a.column(j));
                r[(i, j)] += p;
                let qi = a.column(i).clone_owned();
                a.column_mut(j).axpy(-p, &qi, 1.0);
            }
        }
        let n = a.column(j).norm();
        r[(j, j)] = n;
        if n > 0.0 {
            a.column_mut(j).unscale_mut(n);
        }
    }
    (a, r)
}

/// Leading `m` exponents from QR-reorthonormalised propagation over the whole
/// trajectory, re-orthonormalising every `qr_interval` steps. Fails on
/// dead-band exponents and on near-degenerate gaps among the first `d_u + 1`.
pub fn lyapunov_spectrum<M: MapSystem + ?Sized>(
    map: &M,
    traj: &Trajectory,
    m: usize,
    qr_interval: usize,
) -> Result<Spectrum> {
    let jacs = JacobianSeries::along(map, traj);
    let spec = spectrum_from_jacobians(&jacs, m, qr_interval)?;
    let du = spec.unstable_dim()?;
    spec.check_gaps(du + 1)?;
    Ok(spec)
}

/// QR propagation over precomputed Jacobians; no classification checks.
pub fn spectrum_from_jacobians(
    jacs: &JacobianSeries,
    m: usize,
    qr_interval: usize,
) -> Result<Spectrum> {
    let d = jacs.dim();
    if m == 0 || m > d {
        return Err(S3Error::Config(format!("need 1 <= m <= {d}, got {m}")));
    }
    let interval = qr_interval.max(1);
    let mut q = initial_frame(d, m);
    let mut logs: Vec<Vec<f64>> = vec![Vec::new(); m];
    let steps = jacs.len().saturating_sub(1);
    let transient = QR_TRANSIENT.min(steps / 10);
    let mut t = 0;
    while t + interval <= steps {
        for s in t..t + interval {
            q = jacs.get(s) * q;
        }
        let (qn, r) = thin_qr(q);
        for i in 0..m {
            let rii = r[(i, i)].abs();
            if rii < MIN_R_DIAGONAL {
                return Err(S3Error::IllConditioned { step: t + interval, value: rii });
            }
            if t >= transient {
                logs[i].push(rii.ln() / interval as f64);
            }
        }
        q = qn;
        t += interval;
    }
    if logs[0].is_empty() {
        return Err(S3Error::Config("trajectory too short for a Lyapunov estimate".into()));
    }
    let (exponents, stderr) = logs
        .iter()
        .map(|l| {
            let e = batch_estimate(l, DEFAULT_BATCHES);
            (e.value, e.stderr)
        })
        .unzip();
    Ok(Spectrum { exponents, stderr })
}

/// Covariant vectors of one cocycle on a window, with their one-step stretches.
#[derive(Debug, Clone)]
pub struct CovariantBasis {
    /// `vectors[i]` holds the i-th unit vector at each window step.
    pub vectors: Vec<VectorSeries>,
    /// `stretch[i][n]` is the factor `z` with `M_n v_n = z v_{n+1}`.
    pub stretch: Vec<Vec<f64>>,
}

/// Ginelli's algorithm for a generic cocycle given by `matrix(t)`, `t < steps`,
/// mapping vectors at position `t` to `t + 1`. The window must end before
/// `steps`; positions after it serve as the backward spinup.
pub fn ginelli<F>(
    dim: usize,
    k: usize,
    steps: usize,
    window: Range<usize>,
    matrix: F,
    seed_frame: Option<DMatrix<f64>>,
) -> Result<CovariantBasis>
where
    F: Fn(usize, &DMatrix<f64>) -> DMatrix<f64>,
{
    if k == 0 || k > dim {
        return Err(S3Error::Config(format!("need 1 <= k <= {dim}, got {k}")));
    }
    if window.end > steps || window.start >= window.end {
        return Err(S3Error::Config(format!(
            "window {window:?} must be non-empty and end by step {steps}"
        )));
    }
    let mut q = match seed_frame {
        Some(f) => thin_qr(f).0,
        None => initial_frame(dim, k),
    };
    let len = window.len();
    let mut frames = Vec::with_capacity(len);
    let mut rs: Vec<DMatrix<f64>> = Vec::with_capacity(steps - window.start);
    for t in 0..steps {
        if window.contains(&t) {
            frames.push(q.clone());
        }
        let (qn, r) = thin_qr(matrix(t, &q));
        if t >= window.start {
            for i in 0..k {
                if r[(i, i)].abs() < MIN_R_DIAGONAL {
                    return Err(S3Error::IllConditioned { step: t + 1, value: r[(i, i)].abs() });
                }
            }
            rs.push(r);
        }
        q = qn;
    }

    let mut c = DMatrix::<f64>::identity(k, k);
    let mut vectors = vec![VectorSeries::zeros(dim, len); k];
    let mut stretch = vec![vec![0.0; len]; k];
    for t in (window.start..steps).rev() {
        let r = &rs[t - window.start];
        c = r
            .solve_upper_triangular(&c)
            .ok_or(S3Error::IllConditioned { step: t + 1, value: 0.0 })?;
        for i in 0..k {
            let n = c.column(i).norm();
            c.column_mut(i).unscale_mut(n);
            if t < window.end {
                stretch[i][t - window.start] = 1.0 / n;
            }
        }
        if t < window.end {
            let v = &frames[t - window.start] * &c;
            for i in 0..k {
                vectors[i].set(t - window.start, v.column(i).as_slice());
            }
        }
    }

    for series in vectors.iter_mut() {
        let first = series.get(0);
        if dominant_sign(first.as_slice()) < 0.0 {
            for n in 0..len {
                series.slice_mut(n).iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    Ok(CovariantBasis { vectors, stretch })
}

/// Sign of the largest-magnitude component; ties go to the lowest index.
pub fn dominant_sign(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in v {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Ginelli window for a trajectory with `forward` and `backward` spinups.
pub fn ginelli_window(traj_len: usize, forward: usize, backward: usize) -> Result<Range<usize>> {
    let start = forward.max(1);
    let end = traj_len.saturating_sub(backward + 1);
    if end <= start {
        return Err(S3Error::Config(format!(
            "trajectory of {traj_len} states leaves no window after spinups {forward} + {backward}"
        )));
    }
    Ok(start..end)
}

/// Tangent CLVs `V^1..V^k` on `window` (trajectory indices).
pub fn compute_clvs(jacs: &JacobianSeries, k: usize, window: Range<usize>) -> Result<CovariantBasis> {
    let steps = jacs.len().saturating_sub(1);
    let shifted = window.start..window.end;
    ginelli(jacs.dim(), k, steps, shifted, |t, q| jacs.get(t) * q, None)
}

/// Adjoint CLVs `W^1..W^k` on `window` (trajectory indices), from transposed
/// Jacobians run in reverse orbit order. `stretch[i][n]` is the factor with
/// `Dφ(u_{n-1})^T W_n = stretch W_{n-1}`.
pub fn compute_adjoint_clvs(
    jacs: &JacobianSeries,
    k: usize,
    window: Range<usize>,
) -> Result<CovariantBasis> {
    let len = jacs.len();
    if window.start == 0 || window.end > len {
        return Err(S3Error::Config("adjoint window needs a preceding state".into()));
    }
    // position τ corresponds to trajectory index len - 1 - τ
    let steps = len - 1;
    let rev = (len - window.end)..(len - window.start);
    let basis = ginelli(
        jacs.dim(),
        k,
        steps,
        rev,
        |tau, q| jacs.get(len - 2 - tau).transpose() * q,
        None,
    )?;
    let n = window.len();
    let mut vectors = vec![VectorSeries::zeros(jacs.dim(), n); k];
    let mut stretch = vec![vec![0.0; n]; k];
    for i in 0..k {
        for m in 0..n {
            let src = n - 1 - m;
            vectors[i].set(m, basis.vectors[i].slice(src));
            stretch[i][m] = basis.stretch[i][src];
        }
    }
    Ok(CovariantBasis { vectors, stretch })
}

/// Tangent and adjoint CLVs on a trajectory window.
#[derive(Debug, Clone)]
pub struct ClvFrames {
    /// Trajectory index of the first window step.
    pub offset: usize,
    pub v: Vec<VectorSeries>,
    pub w: Vec<VectorSeries>,
    /// `z[i][n] = |Dφ(u_n) V^i_n|`.
    pub z: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
    pub unstable_dim: usize,
}

impl ClvFrames {
    pub fn len(&self) -> usize {
        self.z.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn v_at(&self, i: usize, n: usize) -> DVectorView<'_, f64> {
        self.v[i].view(n - self.offset)
    }

    pub fn w_at(&self, i: usize, n: usize) -> DVectorView<'_, f64> {
        self.w[i].view(n - self.offset)
    }

    pub fn z_at(&self, i: usize, n: usize) -> f64 {
        self.z[i][n - self.offset]
    }

    /// Time average of `log z^i` over the window, with batch-means error.
    pub fn mean_log_stretch(&self, i: usize) -> crate::stats::Estimate {
        let logs: Vec<f64> = self.z[i].iter().map(|z| z.ln()).collect();
        batch_estimate(&logs, DEFAULT_BATCHES)
    }
}

/// Builds `k_tangent` tangent and `k_adjoint` adjoint CLVs on `window`, orienting
/// each `W^i` so that `V^i · W^i > 0` where both exist.
pub fn clv_frames(
    jacs: &JacobianSeries,
    spectrum: &Spectrum,
    k_tangent: usize,
    k_adjoint: usize,
    window: Range<usize>,
) -> Result<ClvFrames> {
    let unstable_dim = spectrum.unstable_dim()?;
    let tangent = compute_clvs(jacs, k_tangent, window.clone())?;
    let mut adjoint = if k_adjoint > 0 {
        compute_adjoint_clvs(jacs, k_adjoint, window.clone())?.vectors
    } else {
        Vec::new()
    };
    for (i, w) in adjoint.iter_mut().enumerate() {
        let flip = if i < k_tangent {
            w.view(0).dot(&tangent.vectors[i].view(0)) < 0.0
        } else {
            dominant_sign(w.slice(0)) < 0.0
        };
        if flip {
            for n in 0..w.len() {
                w.slice_mut(n).iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    Ok(ClvFrames {
        offset: window.start,
        v: tangent.vectors,
        w: adjoint,
        z: tangent.stretch,
        lyapunov: spectrum.exponents.clone(),
        unstable_dim,
    })
}

/// Per-step oblique decomposition `X = Xu + Xs` with `Xs · W^i = 0`.
#[derive(Debug, Clone)]
pub struct SplitField {
    /// `a[i][n]`: coefficient of `V^i_n` in `Xu_n`.
    pub a: Vec<Vec<f64>>,
    pub xu: VectorSeries,
    pub xs: VectorSeries,
}

/// Splits `x` (one vector per window step of `frames`) along the first
/// `frames.unstable_dim` tangent/adjoint pairs.
pub fn split_perturbation(x: &VectorSeries, frames: &ClvFrames) -> Result<SplitField> {
    let du = frames.unstable_dim;
    let n = x.len();
    if n > frames.len() {
        return Err(S3Error::Config(format!(
            "split needs {n} frames, only {} available",
            frames.len()
        )));
    }
    if frames.v.len() < du || frames.w.len() < du {
        return Err(S3Error::Config("frames lack unstable tangent or adjoint vectors".into()));
    }
    let d = x.dim();
    let mut a = vec![vec![0.0; n]; du];
    let mut xu = VectorSeries::zeros(d, n);
    let mut xs = VectorSeries::zeros(d, n);
    for m in 0..n {
        let xm = x.view(m);
        let mut u = DVector::zeros(d);
        for i in 0..du {
            let v = frames.v[i].view(m);
            let w = frames.w[i].view(m);
            let vw = v.dot(&w);
            if vw.abs() < MIN_ANGLE {
                return Err(S3Error::Tangency { step: frames.offset + m, value: vw.abs() });
            }
            let coef = xm.dot(&w) / vw;
            a[i][m] = coef;
            u += v * coef;
        }
        let s = xm - &u;
        xu.set(m, u.as_slice());
        xs.set(m, s.as_slice());
    }
    Ok(SplitField { a, xu, xs })
}

/// Coefficient of `x` along `V^i` in the oblique splitting at one point.
pub fn unstable_coefficient(x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    let vw: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
    if vw.abs() < MIN_ANGLE {
        return Err(S3Error::Tangency { step: 0, value: vw.abs() });
    }
    Ok(x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / vw)
}
