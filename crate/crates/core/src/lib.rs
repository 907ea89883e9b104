//! Regularized Newton methods for near-field x-ray phase-contrast imaging.
//!
//! The crate models holographic contrast formation `I = |D(exp(-i f))|^2`
//! with a discrete Fresnel propagator `D`, inverts it by the iteratively
//! regularized Gauss-Newton method ([`solver::irgnm`]) and extends it to
//! tomography through the Radon transform and a Newton-Kaczmarz sweep
//! over angular wedges ([`kaczmarz::kaczmarz_reconstruct`]).

pub mod analysis;
pub mod error;
pub mod gridmath;
pub mod io;
pub mod kaczmarz;
pub mod operators;
pub mod phantom;
pub mod solver;

pub use error::{Error, Result};
pub use gridmath::{GramianSpec, ImagingGeometry, Padding};
pub use kaczmarz::{KaczmarzConfig, WedgeOrder, WedgeSchedule};
pub use operators::{HoloData, Object2D, Volume3D};
pub use solver::{ConstraintSpec, Fidelity, ReconResult, SolverConfig, StepRecord, StopReason};
