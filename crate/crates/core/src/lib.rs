//! Directed polymers on hierarchical diamond lattices at the critical
//! weak-disorder scaling.

pub mod cli;
pub mod correlation;
pub mod csv_out;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod intersections;
pub mod lattice;
pub mod polymer;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
