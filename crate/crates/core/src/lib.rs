//! Atomistic model of an anti-plane crack on the square lattice.
//!
//! The displacement is split into the continuum predictor `û = ε ω₂` (with `ω`
//! the complex square root map) and a finite-energy lattice corrector `ū`
//! found by Newton's method on a supercell. The crate also builds the lattice
//! Green's function of the cracked lattice as predictor plus corrector and
//! provides the decay and supercell-convergence measurements.

pub mod analysis;
pub mod green;
pub mod lattice;
pub mod model;
pub mod potential;
pub mod predictor;
pub mod solver;

pub use lattice::{Direction, LatticeDomain, ScalarField, Site, SiteKind, Stencil, PINNING_SITE};
pub use model::{EnergyModel, SparseSymmetricOperator};
pub use potential::{reference_potential, PairPotential};
pub use predictor::{ContinuumPoint, LoadingParameter};
pub use solver::{newton, NewtonOptions, SolveReport, SolverError};
