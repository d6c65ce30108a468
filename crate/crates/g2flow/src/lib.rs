//! Cohomogeneity-one torsion-free G2-structures with two-parameter closed forms:
//! invariants, flows, singular seeds, classification and shooting for critical AC solutions.

pub mod classifier;
pub mod cli;
pub mod config;
pub mod error;
pub mod figure;
pub mod flow;
pub mod invariants;
pub mod ode;
pub mod report;
pub mod seeds;
pub mod series;
pub mod shooter;
pub mod verify;

pub use error::{G2Error, Result};
