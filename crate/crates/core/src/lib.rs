//! Boundary-element solver for the linearized Poisson–Boltzmann equation.
//!
//! The crate computes electrostatic solvation free energies of point-charge
//! solutes embedded in a dielectric cavity, estimates the per-panel
//! contribution to the energy error with two adjoint-based estimators, and
//! refines the surface mesh where the estimated error is largest.
//!
//! Module overview:
//!
//! - [`mesh`]: closed triangulated surfaces, icospheres, MSMS input,
//!   red-green refinement and surface-conforming vertex snapping.
//! - [`kernels`]: Laplace/Yukawa Green's functions and panel quadrature,
//!   including the singular self-interaction.
//! - [`solver`]: collocation assembly of the coupled boundary-integral
//!   system and a dense GMRES.
//! - [`physics`]: Coulomb traces, reaction potential, solvation energy and
//!   PQR charge input.
//! - [`estimator`]: the `E_phi` / `E_u` goal-oriented error maps and the
//!   effectivity ratio.
//! - [`oracle`]: Kirkwood sphere solution and Richardson extrapolation.
//! - [`driver`]: adaptive and uniform refinement loops.
//! - [`config`]: INI-style run configuration used by the `pbadapt` binary.

pub mod config;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod mesh;
pub mod oracle;
pub mod physics;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};

/// Points and vectors in Å.
pub type Point = nalgebra::Vector3<f64>;
