//! Periodic lattices, particle configurations and coarse-graining.

mod config;
mod field;
pub mod observables;
mod shape;

pub use config::ParticleConfig;
pub use field::DensityField;
pub use observables::*;
pub use shape::{torus_distance, LatticeShape};
