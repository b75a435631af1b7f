//! Configuration, experiment orchestration and reports.
//!
//! Replicas run on the rayon pool and are reduced in replica order, so the
//! number of threads never changes an output byte.

mod config;
mod experiments;
mod report;
mod ring;

pub use config::*;
pub use experiments::*;
pub use report::*;
pub use ring::*;
