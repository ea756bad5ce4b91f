//! Two-scale finite-element solver for dispersion in periodically perforated media.
//!
//! The macroscopic unknown is a scalar concentration governed by a parabolic
//! equation whose diffusion tensor is not given in closed form: at every point it
//! is the effective dispersion tensor of a periodic cell problem driven by a
//! Stokes velocity field, with a concentration-dependent drift coupling the two
//! scales. The crate provides
//!
//! * perforated unit-cell meshes and uniform rectangle meshes ([`mesh`]),
//! * sparse CSR assembly and a pivoted sparse LU ([`sparse`]),
//! * P1/P2 Lagrange assembly with periodic and Dirichlet constraints ([`fem`]),
//! * a Taylor-Hood Stokes solver for the cell drift field ([`stokes`]),
//! * the per-cell auxiliary problems and the effective tensor ([`cell`]),
//! * precomputed tensor tables with linear interpolation ([`disptable`]),
//! * the implicit-Euler macroscopic stepper and space-time norms ([`macroscale`]),
//! * the two decoupling strategies, fixed-point and time-lagged ([`schemes`]).

pub mod cell;
pub mod disptable;
mod error;
pub mod fem;
pub mod macroscale;
pub mod mesh;
pub mod schemes;
pub mod sparse;
pub mod stokes;

pub use error::{Error, Result};
