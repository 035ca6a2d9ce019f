//! Stable part of the sensitivity: the forced tangent recursion driven by the
//! stable component of the perturbation, averaged against `DJ`.

use crate::cocycles::{ClvFrames, JacobianSeries};
use crate::dynamics::VectorSeries;
use crate::error::{Result, S3Error};
use crate::objectives::Objective;
use crate::stats::{batch_means, estimate_from_batches, mean, Estimate};

pub const DEFAULT_BLOWUP: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct StableTangentRun {
    pub zeta: VectorSeries,
    pub max_norm: f64,
}

impl StableTangentRun {
    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }
}

/// `ζ_n = Dφ(u_{n-1}) ζ_{n-1} + Xs_n` from `ζ_{-1} = 0`, where `xs[n]` lives at
/// trajectory index `offset + n`.
///
/// With `frames`, the unstable components of each `ζ_n` are removed along the
/// CLVs, so round-off is not amplified by the expanding directions.
pub fn solve_stable_tangent(
    jacs: &JacobianSeries,
    offset: usize,
    xs: &VectorSeries,
    blowup: f64,
    frames: Option<&ClvFrames>,
) -> Result<StableTangentRun> {
    let d = xs.dim();
    let n = xs.len();
    if n > 1 && offset + n - 1 > jacs.len() {
        return Err(S3Error::Config("stable recursion runs past the Jacobian series".into()));
    }
    let mut zeta = VectorSeries::zeros(d, n);
    let mut cur = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut max_norm = 0.0f64;
    for m in 0..n {
        if m > 0 {
            jacs.apply(offset + m - 1, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        for (c, x) in cur.iter_mut().zip(xs.slice(m)) {
            *c += x;
        }
        if let Some(f) = frames {
            project_out_unstable(f, offset + m, &mut cur)?;
        }
        let norm = cur.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm <= blowup) {
            return Err(S3Error::StableBlowUp { step: offset + m, norm, threshold: blowup });
        }
        max_norm = max_norm.max(norm);
        zeta.set(m, &cur);
    }
    Ok(StableTangentRun { zeta, max_norm })
}

fn project_out_unstable(frames: &ClvFrames, n: usize, v: &mut [f64]) -> Result<()> {
    if !frames.window().contains(&n) {
        return Err(S3Error::OutOfRange { index: n as isize, len: frames.window().end });
    }
    for i in 0..frames.unstable_dim {
        let vi = frames.v_at(i, n);
        let wi = frames.w_at(i, n);
        let vw = vi.dot(&wi);
        let coef = v.iter().zip(wi.iter()).map(|(a, b)| a * b).sum::<f64>() / vw;
        for (x, e) in v.iter_mut().zip(vi.iter()) {
            *x -= coef * e;
        }
    }
    Ok(())
}

/// Batch-averaged contribution with the per-batch means kept for pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub estimate: Estimate,
    pub batch_means: Vec<f64>,
}

/// Per-step terms `DJ(u_n) · ζ_n`; `states[n]` pairs with `run.zeta[n]`.
pub fn stable_terms<'a, I>(run: &StableTangentRun, states: I, objective: &dyn Objective) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    states
        .into_iter()
        .zip(run.zeta.iter())
        .map(|(u, z)| objective.gradient(u).iter().zip(z).map(|(g, x)| g * x).sum())
        .collect()
}

/// `(1/N) Σ DJ(u_n) · ζ_n` with a batch-means error bar.
pub fn stable_sensitivity<'a, I>(
    run: &StableTangentRun,
    states: I,
    objective: &dyn Objective,
    batches: usize,
) -> Contribution
where
    I: IntoIterator<Item = &'a [f64]>,
{
    contribution_from_terms(&stable_terms(run, states, objective), batches)
}

pub fn contribution_from_terms(terms: &[f64], batches: usize) -> Contribution {
    let means = batch_means(terms, batches);
    let mut estimate = estimate_from_batches(&means);
    estimate.value = mean(terms);
    Contribution { estimate, batch_means: means }
}
