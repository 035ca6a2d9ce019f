//! Independent checks: Monte-Carlo finite differences, the lag-by-lag
//! tangent response terms, and error-versus-N convergence fits.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use serde::{Deserialize, Serialize};

use crate::dynamics::{spun_up_state, step, MapSystem, Params, DEFAULT_SPINUP};
use crate::error::{Result, S3Error};
use crate::objectives::Objective;
use crate::stats::{
    batch_means, estimate_from_batches, linear_fit, mean, variance, CompensatedSum, Estimate,
    LinearFit,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub param: usize,
    pub ds: f64,
    /// Orbit points averaged on each side of the difference.
    pub samples_per_side: usize,
    /// Independent initial conditions the samples are split across.
    pub chains: usize,
    pub spinup: usize,
    pub batches_per_chain: usize,
    pub base_seed: u64,
    pub richardson: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            param: 0,
            ds: 1e-2,
            samples_per_side: 1_000_000,
            chains: 64,
            spinup: DEFAULT_SPINUP,
            batches_per_chain: 4,
            base_seed: 0xfd00,
            richardson: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub value: f64,
    pub stderr: f64,
    pub ds: f64,
    pub samples: usize,
    pub chains: usize,
    /// Estimate at `2 ds` when the Richardson check ran.
    pub coarse: Option<Estimate>,
    pub warning: Option<String>,
}

impl FdEstimate {
    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.stderr)
    }
}

/// Batch means of every objective over `chains` seeded orbits at parameters `s`.
fn side_batches(
    map: &dyn MapSystem,
    objectives: &[Box<dyn Objective>],
    s: &Params,
    cfg: &FdConfig,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let per_chain = cfg.samples_per_side / cfg.chains;
    let chunks: Vec<Vec<(f64, Vec<f64>)>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut u = spun_up_state(map, s, cfg.base_seed + c as u64, cfg.spinup)?;
            let size = per_chain / cfg.batches_per_chain;
            let mut sums = vec![vec![CompensatedSum::new(); cfg.batches_per_chain]; objectives.len()];
            let mut totals = vec![CompensatedSum::new(); objectives.len()];
            for n in 0..per_chain {
                u = step(map, &u, s)?;
                let b = (n / size).min(cfg.batches_per_chain - 1);
                for (k, obj) in objectives.iter().enumerate() {
                    let v = obj.value(u.as_slice());
                    totals[k].add(v);
                    if n < size * cfg.batches_per_chain {
                        sums[k][b].add(v);
                    }
                }
            }
            Ok(sums
                .into_iter()
                .zip(totals)
                .map(|(bs, t)| {
                    (
                        t.value() / per_chain as f64,
                        bs.iter().map(|x| x.value() / size as f64).collect(),
                    )
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..objectives.len())
        .map(|k| {
            let value = mean(&chunks.iter().map(|c| c[k].0).collect::<Vec<_>>());
            let batches = chunks.iter().flat_map(|c| c[k].1.iter().copied()).collect();
            (value, batches)
        })
        .collect())
}

fn central_difference(
    map: &dyn MapSystem,
    objectives: &[Box<dyn Objective>],
    cfg: &FdConfig,
    ds: f64,
) -> Result<Vec<Estimate>> {
    let base = map.reference_params();
    let mut plus = base.clone();
    let mut minus = base.clone();
    plus[cfg.param] += ds;
    minus[cfg.param] -= ds;
    let hi = side_batches(map, objectives, &plus, cfg)?;
    let lo = side_batches(map, objectives, &minus, cfg)?;
    Ok(hi
        .iter()
        .zip(&lo)
        .map(|((vp, bp), (vm, bm))| {
            let sp = estimate_from_batches(bp).stderr;
            let sm = estimate_from_batches(bm).stderr;
            Estimate::new((vp - vm) / (2.0 * ds), sp.hypot(sm) / (2.0 * ds))
        })
        .collect())
}

/// Central difference `(⟨J⟩_{s+ds} - ⟨J⟩_{s-ds}) / (2 ds)` for each objective,
/// each side averaged over seeded post-spinup orbit points.
pub fn fd_sensitivity(
    map: &dyn MapSystem,
    objectives: &[Box<dyn Objective>],
    cfg: &FdConfig,
) -> Result<Vec<FdEstimate>> {
    if cfg.param >= map.param_count() {
        return Err(S3Error::Config(format!("parameter index {} out of range", cfg.param)));
    }
    if cfg.chains == 0
        || cfg.batches_per_chain == 0
        || cfg.samples_per_side < cfg.chains * cfg.batches_per_chain
    {
        return Err(S3Error::Config(
            "finite differences need at least one sample per batch and chain".into(),
        ));
    }
    if !(cfg.ds > 0.0) {
        return Err(S3Error::Config("ds must be positive".into()));
    }
    let fine = central_difference(map, objectives, cfg, cfg.ds)?;
    let coarse = if cfg.richardson {
        Some(central_difference(map, objectives, cfg, 2.0 * cfg.ds)?)
    } else {
        None
    };
    let per_chain = cfg.samples_per_side / cfg.chains;
    Ok(fine
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let c = coarse.as_ref().map(|c| c[k]);
            let warning = c.and_then(|c| {
                // curvature bias at 2ds is four times that at ds
                (!f.agrees_with(&c, 3.0)).then(|| {
                    format!(
                        "ds too large: estimates at ds and 2ds differ by {:.1} sigma",
                        f.z_score(&c)
                    )
                })
            });
            FdEstimate {
                value: f.value,
                stderr: f.stderr,
                ds: cfg.ds,
                samples: per_chain * cfg.chains,
                chains: cfg.chains,
                coarse: c,
                warning,
            }
        })
        .collect())
}

/// Sample mean and variance of the lag-`n` response term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseTerm {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Terms `L_n = DJ(u_n) · T(u_0, n) X(u_0)` over `samples` starting points
/// spaced `stride` steps apart on one seeded orbit, for `n = 0..=n_max`.
pub fn naive_ruelle_terms(
    map: &dyn MapSystem,
    objective: &dyn Objective,
    param: usize,
    n_max: usize,
    samples: usize,
    stride: usize,
    seed: u64,
) -> Result<Vec<ResponseTerm>> {
    if samples < 2 {
        return Err(S3Error::Config("need at least two samples".into()));
    }
    let s = map.reference_params();
    let mut prev = spun_up_state(map, s, seed, DEFAULT_SPINUP)?;
    let mut terms = vec![Vec::with_capacity(samples); n_max + 1];
    let stride = stride.max(1);
    for _ in 0..samples {
        for _ in 0..stride - 1 {
            prev = step(map, &prev, s)?;
        }
        let mut u = step(map, &prev, s)?;
        let mut v = map.param_derivative(&prev, param);
        for (n, slot) in terms.iter_mut().enumerate() {
            slot.push(objective.gradient(u.as_slice()).dot(&v));
            if n < n_max {
                v = map.jacobian(&u) * v;
                u = step(map, &u, s)?;
            }
        }
        prev = step(map, &prev, s)?;
    }
    Ok(terms
        .iter()
        .enumerate()
        .map(|(n, t)| ResponseTerm { n, mean: mean(t), variance: variance(t) })
        .collect())
}

/// Least-squares rate of `log variance(L_n)` against `n` over `range`.
pub fn variance_growth_rate(terms: &[ResponseTerm], range: std::ops::Range<usize>) -> Option<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = terms
        .iter()
        .filter(|t| range.contains(&t.n) && t.variance > 0.0)
        .map(|t| (t.n as f64, t.variance.ln()))
        .unzip();
    linear_fit(&x, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub ns: Vec<usize>,
    /// Root-mean-square error over replicas at each `N`.
    pub errors: Vec<f64>,
    pub fitted_slope: f64,
    /// Two-sided 95% interval for the slope.
    pub slope_ci: (f64, f64),
    /// Set when the errors are all zero and no slope can be fitted.
    pub degenerate: bool,
}

fn student_t_975(dof: usize) -> f64 {
    if dof == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::INFINITY)
}

/// Runs `estimator(N, replica)` on a grid of `N` and fits `log RMS error`
/// against `log N`.
pub fn convergence_study<F>(
    estimator: F,
    reference: Option<f64>,
    ns: &[usize],
    replicas: usize,
) -> Result<ConvergenceReport>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let reference = reference
        .ok_or_else(|| S3Error::Unsupported("convergence study needs a reference value".into()))?;
    if ns.len() < 4 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(S3Error::Config("need at least 4 strictly increasing sample sizes".into()));
    }
    if replicas == 0 {
        return Err(S3Error::Config("need at least one replica".into()));
    }
    let jobs: Vec<(usize, usize)> = ns
        .iter()
        .flat_map(|&n| (0..replicas).map(move |r| (n, r)))
        .collect();
    let sq: Vec<f64> = jobs
        .par_iter()
        .map(|&(n, r)| estimator(n, r).map(|v| (v - reference).powi(2)))
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = sq.chunks(replicas).map(|c| mean(c).sqrt()).collect();
    if errors.iter().all(|&e| e == 0.0) {
        return Ok(ConvergenceReport {
            ns: ns.to_vec(),
            errors,
            fitted_slope: f64::NAN,
            slope_ci: (f64::NAN, f64::NAN),
            degenerate: true,
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&n, &e)| ((n as f64).ln(), e.ln()))
        .unzip();
    let fit = linear_fit(&x, &y)
        .ok_or_else(|| S3Error::Config("too few nonzero errors for a slope fit".into()))?;
    let half = student_t_975(x.len().saturating_sub(2)) * fit.slope_stderr;
    Ok(ConvergenceReport {
        ns: ns.to_vec(),
        errors,
        fitted_slope: fit.slope,
        slope_ci: (fit.slope - half, fit.slope + half),
        degenerate: false,
    })
}

/// Batch-means estimate of `⟨J⟩` from a stored series, for quick checks.
pub fn ergodic_mean(series: &[f64], batches: usize) -> Estimate {
    let mut e = estimate_from_batches(&batch_means(series, batches));
    e.value = mean(series);
    e
}
