//! End-to-end sensitivity run: trajectory, CLVs, split, stable and unstable
//! contributions, pooled over independent replicas.
//!
//! Each replica records one orbit laid out as
//!
//! ```text
//! | forward spinup | history | warmup | window (N) | max(M, lookahead) + 1 | backward spinup |
//! ```
//!
//! CLVs cover everything between the two Ginelli spinups.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycles::{
    clv_frames, spectrum_from_jacobians, ClvFrames, JacobianSeries, Spectrum,
    DEFAULT_GINELLI_SPINUP,
};
use crate::dynamics::{
    generate_trajectory, perturbation_along, MapSystem, Trajectory, VectorSeries, DEFAULT_SPINUP,
};
use crate::error::{Result, S3Error};
use crate::objectives::Objective;
use crate::stable::{contribution_from_terms, solve_stable_tangent, stable_terms, DEFAULT_BLOWUP};
use crate::stats::{estimate_from_batches, mean, Estimate, DEFAULT_BATCHES};
use crate::unstable::{
    assemble_g, correlation_batches, displaced_derivatives, unstable_from_lags,
    DisplacementConfig, LagBatches, Truncation, DEFAULT_WARMUP,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub param: usize,
    /// Length of the averaging window per replica.
    pub samples: usize,
    pub spinup: usize,
    pub ginelli_forward: usize,
    pub ginelli_backward: usize,
    pub warmup: usize,
    pub truncation: Truncation,
    pub displacement: DisplacementConfig,
    pub batches: usize,
    pub blowup: f64,
    pub qr_interval: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            param: 0,
            samples: 100_000,
            spinup: DEFAULT_SPINUP,
            ginelli_forward: DEFAULT_GINELLI_SPINUP,
            ginelli_backward: DEFAULT_GINELLI_SPINUP,
            warmup: DEFAULT_WARMUP,
            truncation: Truncation::default(),
            displacement: DisplacementConfig::default(),
            batches: DEFAULT_BATCHES,
            blowup: DEFAULT_BLOWUP,
            qr_interval: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, map: &dyn MapSystem) -> Result<()> {
        if self.param >= map.param_count() {
            return Err(S3Error::Config(format!(
                "parameter index {} out of range for `{}` ({} parameters)",
                self.param,
                map.id(),
                map.param_count()
            )));
        }
        if self.samples == 0 || self.batches == 0 || self.qr_interval == 0 {
            return Err(S3Error::Config("samples, batches and qr_interval must be positive".into()));
        }
        if self.samples < self.batches {
            return Err(S3Error::Config("fewer samples than batches".into()));
        }
        if self.displacement.history == 0 || self.displacement.lookahead == 0 {
            return Err(S3Error::Config("displacement history and lookahead must be positive".into()));
        }
        if !(self.displacement.h > 0.0) {
            return Err(S3Error::Config("displacement h must be positive".into()));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let f = self.ginelli_forward.max(1);
        let start = f + self.displacement.history;
        let window_start = start + self.warmup;
        let tail = self.truncation.max_lag().max(self.displacement.lookahead) + 1;
        Layout {
            forward: f,
            g_steps: start..window_start + self.samples,
            window: window_start..window_start + self.samples,
            len: window_start + self.samples + tail + self.ginelli_backward + 1,
        }
    }
}

struct Layout {
    forward: usize,
    g_steps: Range<usize>,
    window: Range<usize>,
    len: usize,
}

/// Per-objective result of a sensitivity run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSensitivity {
    pub label: String,
    pub stable: Estimate,
    pub unstable: Estimate,
    /// `total.value` is exactly `stable.value + unstable.value`.
    pub total: Estimate,
    pub truncation: usize,
    pub lag_terms: Vec<Estimate>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRun {
    pub objectives: Vec<ObjectiveSensitivity>,
    pub spectrum: Spectrum,
    pub unstable_dim: usize,
    pub seeds: Vec<u64>,
    pub samples_per_replica: usize,
}

/// Everything a single replica contributes before pooling.
pub struct ReplicaOutput {
    pub spectrum: Spectrum,
    pub unstable_dim: usize,
    pub stable_values: Vec<f64>,
    pub stable_batches: Vec<Vec<f64>>,
    pub lags: Vec<Option<LagBatches>>,
    pub max_zeta: f64,
    pub g: Vec<f64>,
}

/// Orbit, Jacobians and CLV frames of one replica.
pub struct ReplicaGeometry {
    pub trajectory: Trajectory,
    pub jacobians: JacobianSeries,
    pub spectrum: Spectrum,
    pub frames: Option<ClvFrames>,
    pub window: Range<usize>,
    pub g_steps: Range<usize>,
}

pub fn replica_geometry(map: &dyn MapSystem, cfg: &PipelineConfig, seed: u64) -> Result<ReplicaGeometry> {
    cfg.validate(map)?;
    let lay = cfg.layout();
    let trajectory = generate_trajectory(map, seed, lay.len, cfg.spinup)?;
    let jacobians = JacobianSeries::along(map, &trajectory);
    let spectrum = spectrum_from_jacobians(&jacobians, map.dim(), cfg.qr_interval)?;
    let du = spectrum.unstable_dim()?;
    spectrum.check_gaps(du + 1)?;
    let frames = if du > 0 {
        let win = lay.forward..lay.len - cfg.ginelli_backward - 1;
        Some(clv_frames(&jacobians, &spectrum, du, du, win)?)
    } else {
        None
    };
    Ok(ReplicaGeometry {
        trajectory,
        jacobians,
        spectrum,
        frames,
        window: lay.window,
        g_steps: lay.g_steps,
    })
}

pub fn run_replica(
    map: &dyn MapSystem,
    objectives: &[Box<dyn Objective>],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<ReplicaOutput> {
    let geo = replica_geometry(map, cfg, seed)?;
    let traj = &geo.trajectory;
    let d = map.dim();
    let win = geo.window.clone();
    let du = geo.spectrum.unstable_dim()?;

    let g_steps = geo.g_steps.clone();
    let mut x = VectorSeries::with_capacity(d, g_steps.len());
    for n in g_steps.clone() {
        x.push(perturbation_along(map, traj, n, cfg.param)?.as_slice());
    }
    let local = win.start - g_steps.start;

    let (xs, g) = match &geo.frames {
        None => {
            let mut xs = VectorSeries::with_capacity(d, win.len());
            for m in local..x.len() {
                xs.push(x.slice(m));
            }
            (xs, Vec::new())
        }
        Some(frames) => {
            let shift = g_steps.start - frames.offset;
            let frames_for_split = ClvFrames {
                offset: g_steps.start,
                v: frames
                    .v
                    .iter()
                    .map(|s| tail_series(s, shift, g_steps.len()))
                    .collect(),
                w: frames
                    .w
                    .iter()
                    .map(|s| tail_series(s, shift, g_steps.len()))
                    .collect(),
                z: frames.z.iter().map(|z| z[shift..shift + g_steps.len()].to_vec()).collect(),
                lyapunov: frames.lyapunov.clone(),
                unstable_dim: du,
            };
            let split = crate::cocycles::split_perturbation(&x, &frames_for_split)?;
            let derivs = (0..du)
                .map(|i| {
                    displaced_derivatives(map, traj, frames, i, cfg.param, g_steps.clone(), &cfg.displacement)
                })
                .collect::<Result<Vec<_>>>()?;
            let run = assemble_g(&split.a, &frames_for_split.z, &derivs, cfg.warmup)?;
            let mut xs = VectorSeries::with_capacity(d, win.len());
            for m in local..split.xs.len() {
                xs.push(split.xs.slice(m));
            }
            (xs, run.g)
        }
    };

    let stable = solve_stable_tangent(&geo.jacobians, win.start, &xs, cfg.blowup, geo.frames.as_ref())?;
    let states: Vec<&[f64]> = win.clone().map(|n| traj.slice(n)).collect();
    let max_lag = cfg.truncation.max_lag();

    let per_objective: Vec<(f64, Vec<f64>, Option<LagBatches>)> = objectives
        .par_iter()
        .map(|obj| {
            let terms = stable_terms(&stable, states.iter().copied(), obj.as_ref());
            let c = contribution_from_terms(&terms, cfg.batches);
            let lags = if du > 0 {
                let j: Vec<f64> = (win.start..win.end + max_lag)
                    .map(|n| obj.value(traj.slice(n)))
                    .collect();
                Some(correlation_batches(&j, &g, max_lag, cfg.batches)?)
            } else {
                None
            };
            Ok((c.estimate.value, c.batch_means, lags))
        })
        .collect::<Result<_>>()?;

    let mut stable_values = Vec::new();
    let mut stable_batches = Vec::new();
    let mut lags = Vec::new();
    for (v, b, l) in per_objective {
        stable_values.push(v);
        stable_batches.push(b);
        lags.push(l);
    }
    Ok(ReplicaOutput {
        spectrum: geo.spectrum.clone(),
        unstable_dim: du,
        stable_values,
        stable_batches,
        lags,
        max_zeta: stable.max_norm,
        g,
    })
}

fn tail_series(s: &VectorSeries, from: usize, len: usize) -> VectorSeries {
    let mut out = VectorSeries::with_capacity(s.dim(), len);
    for n in from..from + len {
        out.push(s.slice(n));
    }
    out
}

/// Runs one replica per seed (in parallel) and pools them.
pub fn run_sensitivity(
    map: &dyn MapSystem,
    objectives: &[Box<dyn Objective>],
    cfg: &PipelineConfig,
    seeds: &[u64],
) -> Result<SensitivityRun> {
    if objectives.is_empty() {
        return Err(S3Error::Config("objective family is empty".into()));
    }
    if seeds.is_empty() {
        return Err(S3Error::Config("at least one seed is required".into()));
    }
    let replicas: Vec<ReplicaOutput> = seeds
        .par_iter()
        .map(|&s| run_replica(map, objectives, cfg, s))
        .collect::<Result<_>>()?;
    pool_replicas(objectives, cfg, seeds, &replicas)
}

fn pool_replicas(
    objectives: &[Box<dyn Objective>],
    cfg: &PipelineConfig,
    seeds: &[u64],
    replicas: &[ReplicaOutput],
) -> Result<SensitivityRun> {
    let du = replicas[0].unstable_dim;
    if replicas.iter().any(|r| r.unstable_dim != du) {
        return Err(S3Error::Config("replicas disagree on the unstable dimension".into()));
    }
    let m = replicas[0].spectrum.exponents.len();
    let exponents: Vec<f64> = (0..m)
        .map(|i| mean(&replicas.iter().map(|r| r.spectrum.exponents[i]).collect::<Vec<_>>()))
        .collect();
    let stderr: Vec<f64> = (0..m)
        .map(|i| {
            let s2: f64 = replicas.iter().map(|r| r.spectrum.stderr[i].powi(2)).sum();
            s2.sqrt() / replicas.len() as f64
        })
        .collect();

    let mut out = Vec::with_capacity(objectives.len());
    for (k, obj) in objectives.iter().enumerate() {
        let stable_batches: Vec<f64> = replicas
            .iter()
            .flat_map(|r| r.stable_batches[k].iter().copied())
            .collect();
        let stable_value = mean(&replicas.iter().map(|r| r.stable_values[k]).collect::<Vec<_>>());
        let stable = Estimate::new(stable_value, estimate_from_batches(&stable_batches).stderr);
        let (unstable, unstable_batches, truncation, lag_terms, warning) = if du > 0 {
            let parts: Vec<LagBatches> = replicas
                .iter()
                .map(|r| r.lags[k].clone().expect("lags present when unstable"))
                .collect();
            let pooled = LagBatches::pool(&parts)?;
            let u = unstable_from_lags(&pooled, cfg.truncation);
            (u.estimate, u.batch_means, u.truncation, u.lag_terms, u.warning)
        } else {
            (Estimate::new(0.0, 0.0), vec![0.0; stable_batches.len()], 0, Vec::new(), None)
        };
        let total_batches: Vec<f64> = stable_batches
            .iter()
            .zip(&unstable_batches)
            .map(|(s, u)| s + u)
            .collect();
        let total = Estimate::new(
            stable.value + unstable.value,
            estimate_from_batches(&total_batches).stderr,
        );
        out.push(ObjectiveSensitivity {
            label: obj.label(),
            stable,
            unstable,
            total,
            truncation,
            lag_terms,
            warning,
        });
    }
    Ok(SensitivityRun {
        objectives: out,
        spectrum: Spectrum { exponents, stderr },
        unstable_dim: du,
        seeds: seeds.to_vec(),
        samples_per_replica: cfg.samples,
    })
}
