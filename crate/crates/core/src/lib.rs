//! Zero-range particle systems in quenched chemotactic environments.
//!
//! The crate bundles the exact ensemble functions (`Z`, `M`, `R`, `Φ`, `f̃`,
//! canonical measures), quenched environment construction, an exact
//! kinetic Monte Carlo simulator under diffusive scaling, an explicit
//! conservative solver for `∂ₜρ = Δ Φ(u, ρ)` and the experiment harness that
//! compares the two.

pub mod ensemble;
pub mod environment;
pub mod error;
pub mod harness;
pub mod io;
pub mod kmc;
pub mod lattice;
pub mod pde;
pub mod rng;

pub use error::{Error, Result};
