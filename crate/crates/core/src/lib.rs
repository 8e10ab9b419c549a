//! Multi-block grid deformation.
//!
//! Moves the nodes of a multi-block structured grid so that the Jacobian
//! determinant of the node map follows a prescribed, time-dependent monitor
//! function `f`. Each step solves `Δω = −∂ₜ(1/f)` on the fixed domain with
//! SOR and advects the nodes along `η = f ∇ω`.

pub mod cli;
pub mod config;
pub mod deform;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod monitor;
pub mod poisson;
pub mod velocity;
pub mod verify;
pub mod vtk;

pub use error::{Error, Result};

/// A point or vector in physical space.
pub type Vec3 = [f64; 3];
