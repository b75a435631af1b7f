//! Kinetic Monte Carlo for the zero-range process in a quenched environment.

pub mod exact;
mod initial;
mod sim;
mod sumtree;

pub use exact::ExactGenerator;
pub use initial::InitialCondition;
pub use sim::{EventLog, JumpRecord, SamplerKind, SimulatorState};
pub use sumtree::SumTree;
