//! Cahn–Hilliard–Darcy tumor-growth model on a rectangle: forward simulation
//! with mass sources, exact discrete tangent and adjoint sensitivities, and a
//! projected-gradient solver for the box-constrained tracking control problem.
//!
//! Module layout:
//!
//! * [`fields`] grid, face-staggered Neumann operators and elliptic solvers.
//! * [`state`] the semi-implicit forward scheme and its diagnostics.
//! * [`sensitivity`] tangent (linearized) and adjoint solvers.
//! * [`control`] cost functional, admissible box and the optimizer.
//! * [`driver`] configuration, CLI subcommands and file output.

pub mod control;
pub mod driver;
pub mod error;
pub mod fields;
pub mod sensitivity;
pub mod state;

pub use error::{Error, Result};
