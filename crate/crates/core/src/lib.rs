//! Solver library for a binary fluid-surfactant phase-field model: two
//! coupled Cahn-Hilliard-type equations discretized with a Fourier
//! pseudo-spectral method in space and linear, unconditionally energy-stable
//! time stepping based on energy quadratization.
//!
//! Modules follow the pipeline: [`spectral`] supplies the periodic grid and
//! differential operators, [`model`] the physics (parameters, potentials,
//! energies, auxiliary variables), [`schemes`] one time step of each
//! integrator, [`linsolve`] the matrix-free preconditioned CG solver,
//! [`diagnostics`] error norms and property harnesses, and [`app`] the CLI
//! driver with experiment presets, snapshots and checkpointing.

pub mod app;
pub mod rng;
pub mod diagnostics;
pub mod error;
pub mod linsolve;
pub mod model;
pub mod schemes;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{ModelParams, State};
pub use schemes::SchemeKind;
pub use spectral::{Grid, ScalarField, VectorField};
