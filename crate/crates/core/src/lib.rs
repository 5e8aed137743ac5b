//! Numerical laboratory for Carleman estimates of the wave operator and
//! Lipschitz stability of the associated inverse problems.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: space-time grids, fields, stencils, quadrature and norms
//! - [`carleman`]: phase function, parameter rules, weights, fluxes
//! - [`forward`]: leapfrog solver for `(□ + q) u = f` with Dirichlet data
//! - [`estimates`]: verifiers for pointwise and integral inequalities
//! - [`experiments`]: stability-ratio harness for the inverse problems
//! - [`recovery`]: adjoint-state reconstruction of the potential
//! - [`report`]: CSV and JSON writers
//! - [`cli`]: the `carleman-lab` command-line tool

pub mod error;
pub mod carleman;
pub mod cli;
pub mod estimates;
pub mod experiments;
pub mod forward;
pub mod grid;
pub mod recovery;
pub mod report;
pub mod testfn;

pub use error::{LabError, Result};
pub use grid::{make_grid, GridSpec, ScalarField, SpaceTimeField};
