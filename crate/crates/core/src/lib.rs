//! Numerics for a weakly self-repelling Levy walk on the four-dimensional
//! hierarchical lattice.
//!
//! * [`lattice`]: the hierarchical group and its ultrametric.
//! * [`free`]: closed forms for the free walk (Green's function, heat kernel,
//!   end-to-end moments, log-periodic limit).
//! * [`rg_flow`]: the coupling recursion, critical killing rate and the
//!   effective-coupling scaling functions.
//! * [`laplace`]: sector-contour inverse Laplace transforms and the
//!   interacting kernel / end-to-end distance built on them.
//! * [`mc`]: continuous-time Monte Carlo with self-repulsion reweighting.

pub mod error;
pub mod free;
pub mod laplace;
pub mod lattice;
pub mod mc;
pub mod rg_flow;
mod numeric;

pub use error::{Error, Result};
pub use lattice::{LatticeParams, Site};
