//! Built-in maps and the id registry used by the command line.

mod expanding;
mod linear;
mod plykin;
mod solenoid;

pub use expanding::ExpandingCircle;
pub use linear::{linear_test_map, AffineContraction, ToralAutomorphism};
pub use plykin::{KuznetsovPlykin, RADIAL_RATE};
pub use solenoid::Solenoid;

use serde::Serialize;

use crate::dynamics::MapSystem;
use crate::error::{Result, S3Error};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapDescriptor {
    pub id: &'static str,
    pub dim: usize,
    pub unstable_dim: usize,
    pub reference_params: &'static [f64],
    pub analytic_jacobian: bool,
    pub invertible: bool,
    pub notes: &'static str,
}

pub const REGISTRY: &[MapDescriptor] = &[
    MapDescriptor {
        id: "linear1d",
        dim: 1,
        unstable_dim: 0,
        reference_params: &[0.0],
        analytic_jacobian: true,
        invertible: true,
        notes: "u -> u/2 + s; fixed point 2s",
    },
    MapDescriptor {
        id: "cat2d",
        dim: 2,
        unstable_dim: 1,
        reference_params: &[0.0],
        analytic_jacobian: true,
        invertible: true,
        notes: "[[2,1],[1,1]] on the unit torus, shifted by s along x",
    },
    MapDescriptor {
        id: "solenoid",
        dim: 3,
        unstable_dim: 1,
        reference_params: &[1.4, 0.0],
        analytic_jacobian: true,
        invertible: true,
        notes: "solid-torus solenoid in (r, θ, z); θ periodic",
    },
    MapDescriptor {
        id: "plykin",
        dim: 3,
        unstable_dim: 1,
        reference_params: &[1.0, 1.0],
        analytic_jacobian: true,
        invertible: true,
        notes: "Plykin attractor on the unit sphere; parameters (ε, μ)",
    },
    MapDescriptor {
        id: "expanding1d",
        dim: 1,
        unstable_dim: 1,
        reference_params: &[0.0],
        analytic_jacobian: true,
        invertible: false,
        notes: "2x + s sin(2πx)/(2π) mod 1; uniform density at s = 0",
    },
];

pub fn descriptor(id: &str) -> Option<&'static MapDescriptor> {
    REGISTRY.iter().find(|d| d.id == id)
}

/// Builds a registered map at its reference parameters.
pub fn by_id(id: &str) -> Result<Box<dyn MapSystem>> {
    by_id_with_params(id, None)
}

/// Builds a registered map, optionally overriding its reference parameters.
pub fn by_id_with_params(id: &str, params: Option<&[f64]>) -> Result<Box<dyn MapSystem>> {
    let desc = descriptor(id).ok_or_else(|| {
        let known: Vec<_> = REGISTRY.iter().map(|d| d.id).collect();
        S3Error::Config(format!("unknown map `{id}`; known maps: {}", known.join(", ")))
    })?;
    let p = params.unwrap_or(desc.reference_params);
    if p.len() != desc.reference_params.len() {
        return Err(S3Error::Config(format!(
            "map `{id}` takes {} parameters, got {}",
            desc.reference_params.len(),
            p.len()
        )));
    }
    let map: Box<dyn MapSystem> = match id {
        "linear1d" => {
            if p[0] != 0.0 {
                return Err(S3Error::Config("linear1d reference parameter is fixed at 0".into()));
            }
            Box::new(AffineContraction::new(0.5)?)
        }
        "cat2d" => {
            if p[0] != 0.0 {
                return Err(S3Error::Config("cat2d reference parameter is fixed at 0".into()));
            }
            Box::new(ToralAutomorphism::cat())
        }
        "solenoid" => Box::new(Solenoid::new(p[0], p[1])),
        "plykin" => Box::new(KuznetsovPlykin::new(p[0], p[1])),
        "expanding1d" => Box::new(ExpandingCircle::new(p[0])?),
        _ => unreachable!("registry and constructor list disagree"),
    };
    Ok(map)
}
