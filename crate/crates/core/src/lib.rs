//! Simulation and stability analysis of two irreversible reaction-diffusion
//! networks on the unit interval with homogeneous Neumann boundary data.

pub mod cli;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod init;
pub mod instability;
pub mod model;
pub mod solver;
pub mod spectral;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::{Field, Mesh};
pub use model::{Masses, Params, Regime, System, Triple};
pub use solver::{SolverConfig, State, Trajectory};
