//! Spin-squeezing dynamics of two-dimensional dipolar spin-S arrays.
//!
//! The model is
//! `H = J sum_{i<j} D_ij [-(Sx_i Sx_j + Sy_i Sy_j)/2 + Sz_i Sz_j] + B_q sum_i (Sz_i)^2`
//! on a square lattice with `D_ij = 1/r_ij^3`. Dynamics start from the product
//! coherent state along x.
//!
//! * [`oat`]: exact one-axis twisting of the collective rotor.
//! * [`rsw`]: rotor plus linear spin waves.
//! * [`tce`]: second-order cumulant expansion of the lattice dynamics.
//! * [`ed`]: exact evolution of tiny clusters.
//! * [`meanfield`]: self-consistent thermodynamics and phase boundaries.

pub mod analysis;
pub mod config;
pub mod ed;
pub mod error;
pub mod lattice;
pub mod meanfield;
pub mod oat;
pub mod observe;
pub mod output;
pub mod rsw;
pub mod runner;
pub mod spin;
pub mod tce;

pub use error::{Error, Result};
pub use lattice::{build_couplings, Boundary, CouplingTable, LatticeSpec};
pub use oat::{CollectiveMoments, OatParams};
pub use spin::Spin;
