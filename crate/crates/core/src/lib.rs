//! Sensitivities of long-time averages of chaotic maps, computed by splitting
//! the parameter perturbation into stable and unstable parts.

pub mod cocycles;
pub mod dynamics;
pub mod error;
pub mod maps;
pub mod objectives;
pub mod pipeline;
pub mod stable;
pub mod stats;
pub mod unstable;
pub mod validation;

pub use error::{Result, S3Error};
