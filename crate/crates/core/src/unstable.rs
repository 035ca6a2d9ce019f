//! Unstable part of the sensitivity.
//!
//! The unstable directional derivative of `⟨J⟩` is rewritten as a sum of time
//! correlations between `J` and a bounded scalar `g`. `g` is assembled from the
//! unstable coefficients `a^i`, their derivatives along `V^i`, and the
//! functions `g^i` obtained from the backward-stretch recursion
//! `β_{k+1} = β_k / z_k + D(1/z)_k · V_k`, `g^i ≈ -β`.
//!
//! Directional derivatives are central differences between two points
//! displaced by `±h` along the unstable manifold. The displaced points are
//! reached by pushing a tiny offset along `V^i` forward from `history` steps in
//! the past, so they stay on the unstable leaf and come with their own
//! preimages. In [`FrameMode::Recomputed`] the CLVs at the displaced points are
//! rebuilt from that history (tangent) and from `lookahead` steps of their own
//! future (adjoint). [`FrameMode::Frozen`] reuses the on-orbit vectors.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycles::{ginelli, ClvFrames, MIN_ANGLE};
use crate::dynamics::{step, MapSystem, State, Trajectory};
use crate::error::{Result, S3Error};
use crate::maps::ExpandingCircle;
use crate::stats::{compensated_sum, estimate_from_batches, mean, CompensatedSum, Estimate};

pub const DEFAULT_H: f64 = 1e-5;
pub const DEFAULT_WARMUP: usize = 50;
pub const DEFAULT_M_CAP: usize = 100;
/// Consecutive quiet lags required by the adaptive truncation.
pub const QUIET_RUN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMode {
    Frozen,
    Recomputed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementConfig {
    pub h: f64,
    pub mode: FrameMode,
    /// Steps of past orbit used to place the displaced point and its `V`.
    pub history: usize,
    /// Steps of future orbit used to rebuild `W` at the displaced point.
    pub lookahead: usize,
}

impl Default for DisplacementConfig {
    fn default() -> Self {
        Self { h: DEFAULT_H, mode: FrameMode::Recomputed, history: 20, lookahead: 20 }
    }
}

/// `D(1/z^i) · V^i` and `Da^i · V^i` at a run of trajectory steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirectionalDerivatives {
    pub stretch: Vec<f64>,
    pub coefficient: Vec<f64>,
}

struct Displaced {
    q: State,
    inv_z: f64,
    a: f64,
}

#[allow(clippy::too_many_arguments)]
fn displaced_point<M: MapSystem + ?Sized>(
    map: &M,
    traj: &Trajectory,
    frames: &ClvFrames,
    i: usize,
    param: usize,
    n: usize,
    offset: f64,
    cfg: &DisplacementConfig,
) -> Result<Displaced> {
    let k = cfg.history;
    let l = cfg.lookahead;
    let s = map.reference_params();
    let start = n - k;
    let growth: f64 = (start..n).map(|j| frames.z_at(i, j)).product();
    let v_start = frames.v_at(i, start).clone_owned();
    let mut p = traj.state(start) + &v_start * (offset / growth);
    map.chart().wrap(&mut p);

    let recompute = cfg.mode == FrameMode::Recomputed;
    let fast = i == 0;
    let mut chain_jacs: Vec<DMatrix<f64>> = Vec::new();
    let mut v = v_start;
    let mut prev = p.clone();
    for _ in 0..k {
        if recompute {
            let jac = map.jacobian(&p);
            if fast {
                v = &jac * v;
                v.normalize_mut();
            } else {
                chain_jacs.push(jac);
            }
        }
        prev = p.clone();
        p = step(map, &p, s)?;
    }
    let q = p;
    let x = map.param_derivative(&prev, param);
    let jq = map.jacobian(&q);

    let (vq, wq) = if !recompute {
        (frames.v_at(i, n).clone_owned(), frames.w_at(i, n).clone_owned())
    } else {
        let mut future = Vec::with_capacity(l);
        future.push(jq.clone());
        let mut f = q.clone();
        for _ in 1..l {
            f = step(map, &f, s)?;
            future.push(map.jacobian(&f));
        }
        if fast {
            let mut w = frames.w_at(i, n + l).clone_owned();
            for jac in future.iter().rev() {
                w = jac.tr_mul(&w);
                w.normalize_mut();
            }
            (v, w)
        } else {
            chain_jacs.extend(future);
            general_frames(frames, i, n, k, l, &chain_jacs)?
        }
    };

    let v_on = frames.v_at(i, n);
    let w_on = frames.w_at(i, n);
    let vq = if vq.dot(&v_on) < 0.0 { -vq } else { vq };
    let wq = if wq.dot(&w_on) < 0.0 { -wq } else { wq };
    let z = (&jq * &vq).norm();
    let vw = vq.dot(&wq);
    if vw.abs() < MIN_ANGLE {
        return Err(S3Error::Tangency { step: n, value: vw.abs() });
    }
    Ok(Displaced { q, inv_z: 1.0 / z, a: x.dot(&wq) / vw })
}

/// Tangent and adjoint CLV `i` at the end of a displaced history, via short
/// Ginelli passes seeded with the on-orbit vectors.
fn general_frames(
    frames: &ClvFrames,
    i: usize,
    n: usize,
    k: usize,
    l: usize,
    jacs: &[DMatrix<f64>],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = jacs[0].nrows();
    let seed_v = DMatrix::from_fn(d, i + 1, |r, c| frames.v_at(c, n - k)[r]);
    let tangent = ginelli(d, i + 1, k + l, k..k + 1, |t, q| &jacs[t] * q, Some(seed_v))?;
    let seed_w = DMatrix::from_fn(d, i + 1, |r, c| frames.w_at(c, n + l)[r]);
    let adjoint = ginelli(
        d,
        i + 1,
        l + 1,
        l..l + 1,
        |tau, q| jacs[k + l - 1 - tau].tr_mul(q),
        Some(seed_w),
    )?;
    Ok((tangent.vectors[i].get(0), adjoint.vectors[i].get(0)))
}

fn derivative_at<M: MapSystem + ?Sized>(
    map: &M,
    traj: &Trajectory,
    frames: &ClvFrames,
    i: usize,
    param: usize,
    n: usize,
    cfg: &DisplacementConfig,
) -> Result<(f64, f64)> {
    let mut h = cfg.h;
    for attempt in 0..2 {
        let plus = displaced_point(map, traj, frames, i, param, n, h, cfg);
        let minus = displaced_point(map, traj, frames, i, param, n, -h, cfg);
        match (plus, minus) {
            (Ok(p), Ok(m)) => {
                let span = map.chart().diff(p.q.as_slice(), m.q.as_slice());
                let h_eff = span.dot(&frames.v_at(i, n)) / 2.0;
                return Ok(((p.inv_z - m.inv_z) / (2.0 * h_eff), (p.a - m.a) / (2.0 * h_eff)));
            }
            (Err(S3Error::ChartExit { .. }), _)
            | (_, Err(S3Error::ChartExit { .. }))
            | (Err(S3Error::NonFinite { .. }), _)
            | (_, Err(S3Error::NonFinite { .. })) => {
                if attempt == 0 {
                    h /= 10.0;
                }
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Err(S3Error::DisplacedExit { step: n })
}

/// Directional derivatives of `1/z^i` and `a^i` along `V^i` for every
/// trajectory index in `steps`. The frames must cover `history` steps before
/// and `lookahead` steps after the range.
pub fn displaced_derivatives<M: MapSystem + ?Sized>(
    map: &M,
    traj: &Trajectory,
    frames: &ClvFrames,
    i: usize,
    param: usize,
    steps: Range<usize>,
    cfg: &DisplacementConfig,
) -> Result<DirectionalDerivatives> {
    let win = frames.window();
    if cfg.history == 0 || cfg.lookahead == 0 {
        return Err(S3Error::Config("displacement history and lookahead must be positive".into()));
    }
    if steps.start < win.start + cfg.history || steps.end + cfg.lookahead > win.end {
        return Err(S3Error::Config(format!(
            "steps {steps:?} need frames on [{}, {}), have {win:?}",
            steps.start.saturating_sub(cfg.history),
            steps.end + cfg.lookahead
        )));
    }
    if i >= frames.v.len() || i >= frames.w.len() {
        return Err(S3Error::Config(format!("frames carry no CLV pair {i}")));
    }
    let pairs: Vec<(f64, f64)> = steps
        .into_par_iter()
        .map(|n| derivative_at(map, traj, frames, i, param, n, cfg))
        .collect::<Result<_>>()?;
    let (stretch, coefficient) = pairs.into_iter().unzip();
    Ok(DirectionalDerivatives { stretch, coefficient })
}

/// `D(1/z^i) · V^i` along `steps`.
pub fn stretch_derivative<M: MapSystem + ?Sized>(
    map: &M,
    traj: &Trajectory,
    frames: &ClvFrames,
    i: usize,
    steps: Range<usize>,
    cfg: &DisplacementConfig,
) -> Result<Vec<f64>> {
    Ok(displaced_derivatives(map, traj, frames, i, 0, steps, cfg)?.stretch)
}

/// `Da^i · V^i` along `steps` for perturbation parameter `param`.
pub fn coefficient_derivative<M: MapSystem + ?Sized>(
    map: &M,
    traj: &Trajectory,
    frames: &ClvFrames,
    i: usize,
    param: usize,
    steps: Range<usize>,
    cfg: &DisplacementConfig,
) -> Result<Vec<f64>> {
    Ok(displaced_derivatives(map, traj, frames, i, param, steps, cfg)?.coefficient)
}

/// `β_0 = 0`, `β_{k+1} = β_k / z_k + dz_k`. Returns `β_0 .. β_{len-1}`.
pub fn beta_recursion(z: &[f64], dz: &[f64]) -> Result<Vec<f64>> {
    let len = z.len().min(dz.len());
    if len == 0 {
        return Ok(Vec::new());
    }
    let mean_log = mean(&z[..len].iter().map(|x| x.ln()).collect::<Vec<_>>());
    if !(mean_log > 0.0) {
        return Err(S3Error::NotExpanding { i: 0, value: mean_log });
    }
    let mut beta = Vec::with_capacity(len);
    let mut b = 0.0;
    beta.push(b);
    for k in 0..len - 1 {
        b = b / z[k] + dz[k];
        beta.push(b);
    }
    Ok(beta)
}

/// Recursion state and the resulting `g` on the averaging window.
#[derive(Debug, Clone, PartialEq)]
pub struct UnstableRun {
    /// `beta[i][k]` over warmup plus window.
    pub beta: Vec<Vec<f64>>,
    /// `g(u_n)` on the window (warmup excluded).
    pub g: Vec<f64>,
    pub warmup: usize,
}

impl UnstableRun {
    pub fn max_abs_g(&self) -> f64 {
        self.g.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `g = Σ_i (a^i g^i - Da^i · V^i)` with `g^i = -β^i`, dropping the first
/// `warmup` entries. All inputs share the same step indexing.
pub fn assemble_g(
    a: &[Vec<f64>],
    z: &[Vec<f64>],
    derivs: &[DirectionalDerivatives],
    warmup: usize,
) -> Result<UnstableRun> {
    let du = derivs.len();
    if a.len() < du || z.len() < du {
        return Err(S3Error::Config("missing coefficients or stretches for g".into()));
    }
    let len = derivs.first().map_or(0, |d| d.stretch.len());
    if warmup >= len && du > 0 {
        return Err(S3Error::Config(format!("warmup {warmup} leaves no steps out of {len}")));
    }
    let mut beta = Vec::with_capacity(du);
    for (i, d) in derivs.iter().enumerate() {
        let b = beta_recursion(&z[i][..len], &d.stretch).map_err(|e| match e {
            S3Error::NotExpanding { value, .. } => S3Error::NotExpanding { i, value },
            other => other,
        })?;
        beta.push(b);
    }
    let g = (warmup..len)
        .map(|n| {
            (0..du)
                .map(|i| -a[i][n] * beta[i][n] - derivs[i].coefficient[n])
                .sum()
        })
        .collect();
    Ok(UnstableRun { beta, g, warmup })
}

/// Lag-by-batch means of `(J_{n+i} - J̄) g_i`, the raw material of the
/// truncated correlation sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LagBatches {
    /// `means[lag][batch]`.
    pub means: Vec<Vec<f64>>,
    /// `values[lag] = c_lag` over the full window.
    pub values: Vec<f64>,
    pub samples: usize,
}

impl LagBatches {
    pub fn max_lag(&self) -> usize {
        self.means.len().saturating_sub(1)
    }

    /// Concatenates the batches of independent replicas of equal length.
    pub fn pool(parts: &[LagBatches]) -> Result<LagBatches> {
        let first = parts
            .first()
            .ok_or_else(|| S3Error::Config("nothing to pool".into()))?;
        let lags = first.means.len();
        if parts.iter().any(|p| p.means.len() != lags) {
            return Err(S3Error::Config("replicas disagree on maximum lag".into()));
        }
        let samples: usize = parts.iter().map(|p| p.samples).sum();
        let means = (0..lags)
            .map(|n| parts.iter().flat_map(|p| p.means[n].iter().copied()).collect())
            .collect();
        let values = (0..lags)
            .map(|n| {
                let mut acc = CompensatedSum::new();
                for p in parts {
                    acc.add(p.values[n] * p.samples as f64);
                }
                acc.value() / samples as f64
            })
            .collect();
        Ok(LagBatches { means, values, samples })
    }

    /// Per-lag correlation term with its error bar.
    pub fn terms(&self) -> Vec<Estimate> {
        self.means
            .iter()
            .zip(&self.values)
            .map(|(m, &v)| Estimate::new(v, estimate_from_batches(m).stderr))
            .collect()
    }
}

/// Correlations `c_n = (1/N) Σ_i (J_{n+i} - J̄) g_i` for `n <= max_lag`.
/// `j` must extend at least `max_lag` steps beyond `g`; `J̄` is the mean of `j`.
pub fn correlation_batches(j: &[f64], g: &[f64], max_lag: usize, batches: usize) -> Result<LagBatches> {
    let n = g.len();
    if j.len() < n + max_lag {
        return Err(S3Error::Config(format!(
            "objective series of {} steps cannot cover {n} + {max_lag}",
            j.len()
        )));
    }
    if n == 0 {
        return Err(S3Error::Config("empty g series".into()));
    }
    let jbar = mean(j);
    let centred: Vec<f64> = j.iter().map(|x| x - jbar).collect();
    let lags = max_lag + 1;
    let nb = batches.clamp(1, n);
    let size = n / nb;
    // acc[b * lags + lag]; the last slot row collects the remainder
    let mut acc = vec![0.0; (nb + 1) * lags];
    for (i, &gi) in g.iter().enumerate() {
        let b = (i / size).min(nb);
        let row = &mut acc[b * lags..(b + 1) * lags];
        for (slot, &jv) in row.iter_mut().zip(&centred[i..i + lags]) {
            *slot += jv * gi;
        }
    }
    let means = (0..lags)
        .map(|lag| (0..nb).map(|b| acc[b * lags + lag] / size as f64).collect())
        .collect();
    let values = (0..lags)
        .map(|lag| compensated_sum((0..=nb).map(|b| acc[b * lags + lag])) / n as f64)
        .collect();
    Ok(LagBatches { means, values, samples: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Fixed(usize),
    Auto { cap: usize },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Auto { cap: DEFAULT_M_CAP }
    }
}

impl Truncation {
    pub fn max_lag(&self) -> usize {
        match *self {
            Truncation::Fixed(m) => m,
            Truncation::Auto { cap } => cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnstableEstimate {
    pub estimate: Estimate,
    pub batch_means: Vec<f64>,
    pub lag_terms: Vec<Estimate>,
    pub truncation: usize,
    pub warning: Option<String>,
}

/// Last lag of the first run of `QUIET_RUN` consecutive lags with
/// `|c_n| < 2 stderr(c_n)`, if any.
pub fn adaptive_truncation(terms: &[Estimate]) -> Option<usize> {
    let mut run = 0;
    for (n, t) in terms.iter().enumerate() {
        if t.value.abs() < 2.0 * t.stderr {
            run += 1;
            if run == QUIET_RUN {
                return Some(n);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Truncated correlation sum `Σ_{n<=M} c_n` from lag batches.
pub fn unstable_from_lags(lags: &LagBatches, truncation: Truncation) -> UnstableEstimate {
    let terms = lags.terms();
    let (m, mut warning) = match truncation {
        Truncation::Fixed(m) => (m.min(lags.max_lag()), None),
        Truncation::Auto { cap } => match adaptive_truncation(&terms[..=cap.min(lags.max_lag())]) {
            Some(m) => (m, None),
            None => (
                cap.min(lags.max_lag()),
                Some(format!("correlations not below noise by lag {cap}; increase M")),
            ),
        },
    };
    let last = terms[m];
    if warning.is_none() && last.value.abs() >= 2.0 * last.stderr {
        warning = Some(format!("|c_{m}| = {:.3e} is above the noise floor; increase M", last.value.abs()));
    }
    let nb = lags.means[0].len();
    let batch_means: Vec<f64> = (0..nb)
        .map(|b| (0..=m).map(|n| lags.means[n][b]).sum())
        .collect();
    let value = lags.values[..=m].iter().sum();
    let stderr = estimate_from_batches(&batch_means).stderr;
    UnstableEstimate {
        estimate: Estimate::new(value, stderr),
        batch_means,
        lag_terms: terms,
        truncation: m,
        warning,
    }
}

/// `Σ_{n<=M} (1/N) Σ_i (J_{n+i} - J̄) g_i` with adaptive or fixed `M`.
pub fn unstable_sensitivity(
    j: &[f64],
    g: &[f64],
    truncation: Truncation,
    batches: usize,
) -> Result<UnstableEstimate> {
    let lags = correlation_batches(j, g, truncation.max_lag(), batches)?;
    Ok(unstable_from_lags(&lags, truncation))
}

/// `g = -(ρ' X / ρ + X')` at `φ(prev)` for the expanding circle map, using
/// its closed-form density and the perturbation field along the branch
/// through `prev`.
pub fn g_density_oracle(map: &ExpandingCircle, prev: f64) -> Result<f64> {
    let x = map.apply(&DVector::from_element(1, prev), map.reference_params())[0];
    let (rho, drho) = map.density(x).ok_or_else(|| {
        S3Error::Unsupported(format!(
            "no closed-form invariant density at s = {}",
            map.s()
        ))
    })?;
    Ok(-(drho * map.field(prev) / rho + map.field_derivative(prev)))
}
