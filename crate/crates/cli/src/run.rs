//! Executes a configured run or validation pass and writes its outputs.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context};

use s3_core::cocycles::MIN_ANGLE;
use s3_core::dynamics::{fd_jacobian, fd_param_derivative, generate_trajectory, MapSystem};
use s3_core::maps;
use s3_core::objectives::Objective;
use s3_core::pipeline::{replica_geometry, run_replica, run_sensitivity, SensitivityRun};
use s3_core::stats::{batch_estimate, Estimate};
use s3_core::validation::{
    convergence_study, fd_sensitivity, naive_ruelle_terms, ConvergenceReport, FdEstimate,
    ResponseTerm,
};
use s3_core::S3Error;

use crate::config::{Mode, RunConfig};
use crate::report::{self, CsvTable};

/// Remediation advice attached to core errors.
pub fn hint(e: &S3Error) -> &'static str {
    match e {
        S3Error::NonFinite { .. } | S3Error::ChartExit { .. } => {
            "check the parameter values; the orbit left the map's domain"
        }
        S3Error::DegenerateSpectrum { .. } | S3Error::DeadBand { .. } => {
            "the map is not uniformly hyperbolic at these parameters"
        }
        S3Error::IllConditioned { .. } | S3Error::SingularJacobian { .. } => {
            "increase qr_interval resolution or check the Jacobian"
        }
        S3Error::Tangency { .. } => "stable and unstable directions nearly coincide here",
        S3Error::StableBlowUp { .. } => "the stable recursion diverged; check the split",
        S3Error::DisplacedExit { .. } => "reduce s3.h",
        S3Error::NotInvertible { .. } | S3Error::Unsupported(_) => {
            "this operation is not available for the chosen map"
        }
        S3Error::OutOfRange { .. } | S3Error::Config(_) => "fix the configuration",
        S3Error::NotExpanding { .. } => "the map's unstable stretch fell below one",
    }
}

/// Adds a remediation hint when the error came from the core library.
pub fn with_hint(e: anyhow::Error) -> anyhow::Error {
    match e.downcast_ref::<S3Error>() {
        Some(core) => anyhow::anyhow!("{e:#}\nhint: {}", hint(core)),
        None => e,
    }
}

/// Files written so far; removed on drop unless the run completes.
struct Outputs {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    fn new(dir: &Path, hash: String) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), hash, written: Vec::new(), done: false })
    }

    fn table(&mut self, name: &str, t: &CsvTable) -> anyhow::Result<()> {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        t.write(&p, &self.hash)
    }

    fn text(&mut self, name: &str, body: &str) -> anyhow::Result<()> {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    }

    fn finish(mut self) -> Vec<PathBuf> {
        self.done = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.done {
            for p in &self.written {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub hash: String,
    pub sensitivity: Option<SensitivityRun>,
    pub fd: Option<Vec<FdEstimate>>,
    pub diagnostics: Option<Vec<ResponseTerm>>,
    pub convergence: Option<ConvergenceReport>,
    pub summary: String,
    pub timings: Vec<(String, Duration)>,
    pub files: Vec<PathBuf>,
}

fn build_map(cfg: &RunConfig) -> anyhow::Result<Box<dyn MapSystem>> {
    Ok(maps::by_id_with_params(&cfg.run.map, cfg.run.params.as_deref())?)
}

fn build_objectives(cfg: &RunConfig, map: &dyn MapSystem) -> anyhow::Result<Vec<Box<dyn Objective>>> {
    let objs = cfg.objective.build()?;
    if objs.is_empty() {
        return Err(S3Error::Config("objective family is empty".into()).into());
    }
    let probe = map.sample_initial(&mut s3_core::dynamics::seeded_rng(0));
    if objs[0].gradient(probe.as_slice()).len() != map.dim() {
        bail!("objective family `{}` does not fit map `{}`", cfg.objective.family, map.id());
    }
    Ok(objs)
}

/// Runs the configured mode, writing outputs to `out` (or the configured
/// directory). Outputs written before a failure are removed.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<RunReport> {
    cfg.check()?;
    let hash = cfg.hash();
    let dir = out.unwrap_or(&cfg.run.out);
    let map = build_map(cfg)?;
    let objs = build_objectives(cfg, map.as_ref())?;
    let mut outputs = Outputs::new(dir, hash.clone())?;
    let mut timings = Vec::new();
    let mode = cfg.run.mode;

    let mut sensitivity = None;
    if mode.runs_s3() {
        let t = Instant::now();
        let pipe = cfg.pipeline()?;
        let run = run_sensitivity(map.as_ref(), &objs, &pipe, &cfg.seeds())?;
        timings.push(("s3".to_string(), t.elapsed()));
        outputs.table("sensitivity.csv", &report::sensitivity_table(&run))?;
        outputs.table("correlation.csv", &report::correlation_table(&run))?;
        if cfg.s3.dump_frames > 0 {
            let geo = replica_geometry(map.as_ref(), &pipe, cfg.seeds()[0])?;
            if let Some(f) = &geo.frames {
                outputs.table("frames.csv", &report::frames_table(f, cfg.s3.dump_frames))?;
            }
        }
        sensitivity = Some(run);
    }

    let mut fd = None;
    if mode.runs_fd() {
        let t = Instant::now();
        let est = fd_sensitivity(map.as_ref(), &objs, &cfg.fd_config())?;
        timings.push(("fd".to_string(), t.elapsed()));
        outputs.table("fd.csv", &report::fd_table(&est))?;
        fd = Some(est);
    }

    if let (Some(run), Some(f)) = (&sensitivity, &fd) {
        let totals: Vec<Estimate> = run.objectives.iter().map(|o| o.total).collect();
        outputs.table("comparison.csv", &report::comparison_table(&totals, f))?;
    }

    let mut diagnostics = None;
    let mut convergence = None;
    if mode == Mode::Diagnostics {
        let d = &cfg.diagnostics;
        let obj = objs
            .get(d.objective)
            .ok_or_else(|| S3Error::Config(format!("diagnostics.objective {} out of range", d.objective)))?;
        let t = Instant::now();
        let terms = naive_ruelle_terms(
            map.as_ref(),
            obj.as_ref(),
            cfg.run.param,
            d.n_max,
            d.samples,
            d.stride,
            cfg.run.seed,
        )?;
        timings.push(("naive_ruelle".to_string(), t.elapsed()));
        outputs.table("diagnostics.csv", &report::diagnostics_table(&terms))?;
        diagnostics = Some(terms);
        if !d.convergence_ns.is_empty() {
            let t = Instant::now();
            let base = cfg.pipeline()?;
            let single = &objs[d.objective..d.objective + 1];
            let rep = convergence_study(
                |n, r| {
                    let mut p = base.clone();
                    p.samples = n;
                    p.batches = p.batches.min(n);
                    let run = run_sensitivity(map.as_ref(), single, &p, &[cfg.run.seed + r as u64])?;
                    Ok(run.objectives[0].total.value)
                },
                d.reference,
                &d.convergence_ns,
                d.convergence_replicas,
            )?;
            timings.push(("convergence".to_string(), t.elapsed()));
            outputs.table("convergence.csv", &report::convergence_table(&rep))?;
            convergence = Some(rep);
        }
    }

    let summary = report::summary(&hash, map.id(), cfg.run.param, sensitivity.as_ref(), fd.as_deref());
    outputs.text("summary.txt", &summary)?;
    outputs.text("config.toml", &cfg.to_toml())?;
    let files = outputs.finish();
    Ok(RunReport { hash, sensitivity, fd, diagnostics, convergence, summary, timings, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub hash: String,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

const CONSISTENCY_STEPS: usize = 200;
const CONSISTENCY_TOL: f64 = 1e-5;
const COVARIANCE_TOL: f64 = 1e-8;

fn consistency_checks(map: &dyn MapSystem, param: usize) -> anyhow::Result<Vec<Check>> {
    let traj = generate_trajectory(map, 1, CONSISTENCY_STEPS, 100)?;
    let mut jac_err = 0.0f64;
    let mut x_err = 0.0f64;
    for n in 1..traj.len() {
        let u = traj.state(n);
        let a = map.jacobian(&u);
        let f = fd_jacobian(map, &u);
        jac_err = jac_err.max((a - &f).amax() / f.amax().max(1.0));
        let prev = traj.state(n - 1);
        let a = map.param_derivative(&prev, param);
        let f = fd_param_derivative(map, &prev, param);
        x_err = x_err.max((a - &f).amax() / f.amax().max(1.0));
    }
    Ok(vec![
        Check {
            name: "jacobian_consistency",
            passed: jac_err < CONSISTENCY_TOL,
            detail: format!("max relative deviation from finite differences {jac_err:.2e}"),
        },
        Check {
            name: "perturbation_consistency",
            passed: x_err < CONSISTENCY_TOL,
            detail: format!("max relative deviation from finite differences {x_err:.2e}"),
        },
    ])
}

fn covariance_check(map: &dyn MapSystem, cfg: &RunConfig) -> anyhow::Result<Check> {
    let geo = replica_geometry(map, &cfg.pipeline()?, cfg.seeds()[0])?;
    let Some(frames) = &geo.frames else {
        return Ok(Check {
            name: "clv_covariance",
            passed: true,
            detail: "no unstable directions".into(),
        });
    };
    let win = frames.window();
    let mut worst = 0.0f64;
    let mut min_angle = f64::INFINITY;
    for n in win.start..win.end - 1 {
        let j = geo.jacobians.get(n);
        for i in 0..frames.v.len() {
            let pushed = &j * frames.v_at(i, n);
            let r = (pushed - frames.v_at(i, n + 1) * frames.z_at(i, n)).amax();
            worst = worst.max(r / frames.z_at(i, n));
        }
        for i in 0..frames.w.len() {
            let pulled = j.transpose() * frames.w_at(i, n + 1);
            let r = (&pulled / pulled.norm() - frames.w_at(i, n)).amax();
            worst = worst.max(r);
            min_angle = min_angle.min(frames.v_at(i, n).dot(&frames.w_at(i, n)).abs());
        }
    }
    Ok(Check {
        name: "clv_covariance",
        passed: worst < COVARIANCE_TOL && min_angle > MIN_ANGLE,
        detail: format!("max residual {worst:.2e}, min |V.W| {min_angle:.3}"),
    })
}

fn mean_g_check(map: &dyn MapSystem, objs: &[Box<dyn Objective>], cfg: &RunConfig) -> anyhow::Result<Check> {
    let pipe = cfg.pipeline()?;
    let rep = run_replica(map, &objs[..1], &pipe, cfg.seeds()[0])?;
    if rep.unstable_dim == 0 {
        return Ok(Check { name: "mean_g", passed: true, detail: "no unstable directions".into() });
    }
    let e = batch_estimate(&rep.g, pipe.batches);
    let passed = e.value.abs() <= 3.0 * e.stderr;
    Ok(Check {
        name: "mean_g",
        passed,
        detail: format!("mean g = {:+.3e} ± {:.2e}", e.value, e.stderr),
    })
}

fn decay_check(run: &SensitivityRun) -> Check {
    let noisy: Vec<usize> = run
        .objectives
        .iter()
        .enumerate()
        .filter(|(_, o)| o.warning.is_some())
        .map(|(k, _)| k)
        .collect();
    Check {
        name: "correlation_decay",
        passed: noisy.is_empty(),
        detail: if noisy.is_empty() {
            let ms: Vec<usize> = run.objectives.iter().map(|o| o.truncation).collect();
            format!("lag terms settle within noise; M = {ms:?}")
        } else {
            format!("no quiet run of lag terms for objectives {noisy:?}")
        },
    }
}

/// Structural checks for a map and objective family; see [`validate`].
pub fn validate_with(
    map: &dyn MapSystem,
    objs: &[Box<dyn Objective>],
    cfg: &RunConfig,
) -> anyhow::Result<Vec<Check>> {
    if objs.is_empty() {
        return Err(S3Error::Config("objective family is empty".into()).into());
    }
    let mut checks = consistency_checks(map, cfg.run.param)?;
    checks.push(covariance_check(map, cfg)?);
    checks.push(mean_g_check(map, objs, cfg)?);
    let run = run_sensitivity(map, objs, &cfg.pipeline()?, &cfg.seeds())?;
    checks.push(decay_check(&run));
    Ok(checks)
}

/// Jacobian and perturbation consistency, CLV residuals, `⟨g⟩ ≈ 0` and
/// correlation decay. Writes `validation.csv` when all checks could run.
pub fn validate(cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<ValidationReport> {
    cfg.check()?;
    let hash = cfg.hash();
    let map = build_map(cfg)?;
    let objs = build_objectives(cfg, map.as_ref())?;
    let checks = validate_with(map.as_ref(), &objs, cfg)?;
    let mut outputs = Outputs::new(out.unwrap_or(&cfg.run.out), hash.clone())?;
    let mut t = CsvTable::new(["check", "passed", "detail"]);
    for c in &checks {
        t.push(vec![c.name.to_string(), c.passed.to_string(), format!("\"{}\"", c.detail)]);
    }
    outputs.table("validation.csv", &t)?;
    outputs.finish();
    Ok(ValidationReport { hash, checks })
}
