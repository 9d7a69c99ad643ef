//! Simulation and analysis of heralded entanglement generation in two coupled
//! cavities, each holding a single five-level atom.

pub mod hilbert;
pub mod model;
pub mod dynamics;
pub mod protocol;
pub mod analysis;
pub mod cli;
