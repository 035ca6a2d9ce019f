use thiserror::Error;

/// Failures raised by the sensitivity pipeline. Every message names the
/// stage that failed and, where one exists, the usual remedy.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum S3Error {
    #[error("dynamics: map `{map}` produced a non-finite state at step {step}; check parameters")]
    NonFinite { map: String, step: usize },

    #[error("dynamics: map `{map}` left its chart domain at step {step}; wrong basin or bad initial state")]
    ChartExit { map: String, step: usize },

    #[error("dynamics: singular Jacobian at step {step} during a backward push")]
    SingularJacobian { step: usize },

    #[error("dynamics: map `{map}` is not invertible; backward tangent pushes are disabled")]
    NotInvertible { map: String },

    #[error("dynamics: index {index} out of range for trajectory of length {len}")]
    OutOfRange { index: isize, len: usize },

    #[error("cocycles: exponents {i} and {j} differ by {gap:.3e} (< 1e-3); spectrum is degenerate")]
    DegenerateSpectrum { i: usize, j: usize, gap: f64 },

    #[error("cocycles: exponent {i} = {value:.3e} lies in the dead band |λ| <= 1e-3; cannot classify it")]
    DeadBand { i: usize, value: f64 },

    #[error("cocycles: R diagonal {value:.3e} below 1e-14 at step {step}; frame is ill-conditioned")]
    IllConditioned { step: usize, value: f64 },

    #[error("cocycles: |V·W| = {value:.3e} below 1e-8 at step {step}; near tangency of splitting")]
    Tangency { step: usize, value: f64 },

    #[error("stable_contrib: |ζ| = {norm:.3e} exceeded {threshold:.1e} at step {step}; unstable leakage into Xs, check the split")]
    StableBlowUp { step: usize, norm: f64, threshold: f64 },

    #[error("unstable_contrib: mean log stretch of direction {i} is {value:.3e}; direction is not expanding, index misassigned")]
    NotExpanding { i: usize, value: f64 },

    #[error("unstable_contrib: displaced point left the chart at step {step} even after shrinking h")]
    DisplacedExit { step: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, S3Error>;
