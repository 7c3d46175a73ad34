//! Incompressible SPH with interchangeable boundary pressure handling.
//!
//! The solver advances a fluid of equal-sized particles against static,
//! particle-sampled boundaries. Two axes of configuration exist:
//!
//! * **mode** — `Coupled` solves one pressure field over fluid and boundary
//!   neighborhoods together; `Decoupled` alternates a boundary stage (fluid vs
//!   boundary neighbors only) and a fluid stage (fluid vs fluid neighbors
//!   only), each with its own pressure field and induced acceleration.
//! * **estimator** — how pressure is assigned to boundary samples:
//!   `PressureMirroring` copies the interacting fluid particle's pressure,
//!   `PressureBoundaries` extrapolates a pressure value per boundary sample
//!   from nearby fluid.
//!
//! Densities are artificial (dimensionless): a particle exactly at rest
//! density has density 1. Boundary samples carry a fixed artificial density
//! `gamma` instead of a measured one, which keeps the boundary stage
//! independent of the boundary sampling pattern.
//!
//! The crate is organized bottom-up: [`kernel`] and [`neighbor`] provide the
//! discretization, [`scene`] builds particle layouts, [`solver`] advances
//! them, [`diagnostics`] measures them, and [`experiment`] wires whole runs
//! (scene → relaxation → action → measurement → files on disk).

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod neighbor;
pub mod particles;
pub mod scene;
pub mod solver;

/// 3-component double vector used for positions, velocities, accelerations.
pub type Vec3 = nalgebra::Vector3<f64>;

pub use config::{BoundaryMode, PressureEstimator, SimulationConfig};
pub use error::SphError;
