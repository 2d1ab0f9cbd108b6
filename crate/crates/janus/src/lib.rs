//! Coupled local/nonlocal Neumann diffusion on boxed grids.
//!
//! The library discretizes energies that mix a classical Dirichlet term on a
//! local region, a jump-kernel double integral on a nonlocal region, and a
//! coupling term that exchanges mass either through a shared volume or
//! through an interface of cell faces. Everything downstream of the energy
//! is derived from one assembled sparse symmetric operator: solvers, the
//! spectral-gap (Poincare) machinery with its explicit tracked constants,
//! and a jump-process sampler whose stationary law validates the operator.
//!
//! Layout:
//! * [`domain`] — grids, cell sets, interfaces, delta-connectivity, trees;
//! * [`kernels`] — jump and coupling kernel families with visibility checks;
//! * [`sparse`] — triplet/CSR matrices and Matrix Market export;
//! * [`assembly`] — the energy-to-operator discretization;
//! * [`solver`] — compatibility checks, projected CG, dense oracle,
//!   Euler-Lagrange residuals;
//! * [`eigen`] — constrained smallest-eigenvalue solvers;
//! * [`analysis`] — computed and tracked Poincare constants;
//! * [`particle`] — the jump process and occupancy statistics;
//! * [`config`], [`problem`], [`io`] — the text configuration format, the
//!   config-to-instance builder, and report writers used by the CLI.

pub mod analysis;
pub mod assembly;
pub mod config;
pub mod domain;
pub mod eigen;
pub mod error;
pub mod io;
pub mod kernels;
pub mod particle;
pub mod problem;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
