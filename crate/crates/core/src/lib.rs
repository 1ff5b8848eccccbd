pub mod cli;
pub mod combinatorics;
pub mod cumulants;
pub mod error;
pub mod functionals;
pub mod generators;
pub mod hierarchy;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod ssa;
pub mod state_space;

pub use error::{Error, Result};
