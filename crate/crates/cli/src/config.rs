//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use s3_core::dynamics::State;
use s3_core::maps;
use s3_core::objectives::{
    solenoid_r_theta_family, solenoid_theta_family, sphere_families, Constant, Coordinate,
    NodalAxis, NodalBasisFamily, Objective,
};
use s3_core::pipeline::PipelineConfig;
use s3_core::unstable::{DisplacementConfig, FrameMode, Truncation, DEFAULT_M_CAP};
use s3_core::validation::FdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    S3,
    Fd,
    Both,
    Diagnostics,
}

impl Mode {
    pub fn runs_s3(self) -> bool {
        matches!(self, Mode::S3 | Mode::Both)
    }

    pub fn runs_fd(self) -> bool {
        matches!(self, Mode::Fd | Mode::Both)
    }
}

impl std::str::FromStr for Mode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "s3" => Ok(Mode::S3),
            "fd" => Ok(Mode::Fd),
            "both" => Ok(Mode::Both),
            "diagnostics" => Ok(Mode::Diagnostics),
            other => bail!("unknown mode `{other}` (expected s3, fd, both or diagnostics)"),
        }
    }
}

/// Lag cutoff: a fixed `M` or the keyword `"auto"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MSetting {
    Fixed(usize),
    Keyword(String),
}

impl Default for MSetting {
    fn default() -> Self {
        MSetting::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub map: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    pub param: usize,
    pub mode: Mode,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_replicas() -> usize {
    8
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct S3Section {
    /// Samples per replica.
    pub samples: usize,
    pub spinup: usize,
    pub ginelli_forward: usize,
    pub ginelli_backward: usize,
    pub warmup: usize,
    pub m: MSetting,
    pub m_cap: usize,
    pub h: f64,
    pub frames: FrameMode,
    pub history: usize,
    pub lookahead: usize,
    pub batches: usize,
    pub qr_interval: usize,
    /// Steps of CLV frames from the first replica written to `frames.csv`.
    pub dump_frames: usize,
}

impl Default for S3Section {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            samples: p.samples,
            spinup: p.spinup,
            ginelli_forward: p.ginelli_forward,
            ginelli_backward: p.ginelli_backward,
            warmup: p.warmup,
            m: MSetting::default(),
            m_cap: DEFAULT_M_CAP,
            h: p.displacement.h,
            frames: p.displacement.mode,
            history: p.displacement.history,
            lookahead: p.displacement.lookahead,
            batches: p.batches,
            qr_interval: p.qr_interval,
            dump_frames: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdSection {
    pub ds: f64,
    pub samples_per_side: usize,
    pub chains: usize,
    pub spinup: usize,
    pub richardson: bool,
}

impl Default for FdSection {
    fn default() -> Self {
        let f = FdConfig::default();
        Self {
            ds: f.ds,
            samples_per_side: f.samples_per_side,
            chains: f.chains,
            spinup: f.spinup,
            richardson: f.richardson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Objective whose response terms are examined.
    pub objective: usize,
    pub n_max: usize,
    pub samples: usize,
    pub stride: usize,
    /// Sample sizes for the convergence study; empty skips it.
    pub convergence_ns: Vec<usize>,
    pub convergence_replicas: usize,
    /// Exact value the convergence study measures errors against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            objective: 0,
            n_max: 12,
            samples: 20_000,
            stride: 10,
            convergence_ns: Vec::new(),
            convergence_replicas: 20,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    /// `component`, `polar` or `azimuth`.
    pub coordinate: String,
    #[serde(default)]
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    #[serde(default)]
    pub periodic: bool,
}

impl AxisSpec {
    fn build(&self) -> anyhow::Result<NodalAxis> {
        let c = match self.coordinate.as_str() {
            "component" => Coordinate::Component(self.index),
            "polar" => Coordinate::Polar,
            "azimuth" => Coordinate::Azimuth,
            other => bail!("unknown coordinate `{other}`"),
        };
        if self.nodes < 2 || !(self.hi > self.lo) {
            bail!("axis needs at least 2 nodes and hi > lo");
        }
        Ok(if self.periodic {
            NodalAxis::periodic(c, self.lo, self.hi, self.nodes)
        } else {
            NodalAxis::bounded(c, self.lo, self.hi, self.nodes)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    /// Predefined family name, or `nodal` with explicit `axes`.
    pub family: String,
    #[serde(default)]
    pub index: usize,
    #[serde(default)]
    pub value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axes: Vec<AxisSpec>,
}

impl ObjectiveSection {
    pub fn build(&self) -> anyhow::Result<Vec<Box<dyn Objective>>> {
        let family = match self.family.as_str() {
            "solenoid_theta" => solenoid_theta_family(),
            "solenoid_r_theta" => solenoid_r_theta_family(),
            "sphere_polar" => sphere_families().0,
            "sphere_azimuth" => sphere_families().1,
            "component" => {
                return Ok(vec![Box::new(ComponentObjective(self.index))]);
            }
            "constant" => return Ok(vec![Box::new(Constant(self.value))]),
            "nodal" => {
                let axes = self.axes.iter().map(AxisSpec::build).collect::<anyhow::Result<_>>()?;
                NodalBasisFamily::new(axes)?
            }
            "empty" => return Ok(Vec::new()),
            other => bail!("unknown objective family `{other}`"),
        };
        Ok(family.objectives())
    }
}

/// `J(u) = u_i`.
#[derive(Debug, Clone, Copy)]
struct ComponentObjective(usize);

impl Objective for ComponentObjective {
    fn value(&self, u: &[f64]) -> f64 {
        Coordinate::Component(self.0).value(u)
    }

    fn gradient(&self, u: &[f64]) -> State {
        Coordinate::Component(self.0).gradient(u)
    }

    fn label(&self) -> String {
        format!("u{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub s3: S3Section,
    #[serde(default)]
    pub fd: FdSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    pub objective: ObjectiveSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if maps::descriptor(&self.run.map).is_none() {
            bail!("unknown map `{}`", self.run.map);
        }
        if self.run.replicas == 0 {
            bail!("replicas must be positive");
        }
        let s = &self.s3;
        let counts = [
            ("s3.samples", s.samples),
            ("s3.ginelli_backward", s.ginelli_backward),
            ("s3.history", s.history),
            ("s3.lookahead", s.lookahead),
            ("s3.batches", s.batches),
            ("s3.qr_interval", s.qr_interval),
            ("s3.m_cap", s.m_cap),
            ("fd.samples_per_side", self.fd.samples_per_side),
            ("fd.chains", self.fd.chains),
            ("diagnostics.samples", self.diagnostics.samples),
        ];
        for (name, v) in counts {
            if v == 0 {
                bail!("{name} must be positive");
            }
        }
        if !(s.h > 0.0) || !(self.fd.ds > 0.0) {
            bail!("s3.h and fd.ds must be positive");
        }
        self.truncation()?;
        Ok(())
    }

    pub fn truncation(&self) -> anyhow::Result<Truncation> {
        match &self.s3.m {
            MSetting::Fixed(m) => Ok(Truncation::Fixed(*m)),
            MSetting::Keyword(k) if k == "auto" => Ok(Truncation::Auto { cap: self.s3.m_cap }),
            MSetting::Keyword(k) => bail!("s3.m must be a lag count or \"auto\", got `{k}`"),
        }
    }

    /// Shifts every seed; the shifted config is what gets hashed.
    pub fn with_seed_offset(mut self, offset: u64) -> Self {
        self.run.seed = self.run.seed.wrapping_add(offset);
        self
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.run.replicas as u64).map(|r| self.run.seed.wrapping_add(r)).collect()
    }

    pub fn pipeline(&self) -> anyhow::Result<PipelineConfig> {
        let s = &self.s3;
        Ok(PipelineConfig {
            param: self.run.param,
            samples: s.samples,
            spinup: s.spinup,
            ginelli_forward: s.ginelli_forward,
            ginelli_backward: s.ginelli_backward,
            warmup: s.warmup,
            truncation: self.truncation()?,
            displacement: DisplacementConfig {
                h: s.h,
                mode: s.frames,
                history: s.history,
                lookahead: s.lookahead,
            },
            batches: s.batches,
            qr_interval: s.qr_interval,
            ..PipelineConfig::default()
        })
    }

    pub fn fd_config(&self) -> FdConfig {
        FdConfig {
            param: self.run.param,
            ds: self.fd.ds,
            samples_per_side: self.fd.samples_per_side,
            chains: self.fd.chains,
            spinup: self.fd.spinup,
            base_seed: self.run.seed.wrapping_add(0xfd00_0000),
            richardson: self.fd.richardson,
            ..FdConfig::default()
        }
    }
}
