//! Covariance-matrix laboratory for continuously monitored free-boson chains.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice_model`] builds the quadratic Hamiltonian and the position-linear
//!   jump operators of the long-range chain.
//! * [`gaussian_states`] holds covariance matrices and the entanglement
//!   functionals computed from symplectic spectra.
//! * [`monitored_dynamics`] integrates the covariance Riccati flow and finds
//!   steady states.
//! * [`spectral_theory`] evaluates polylogarithms, dispersions and finite-size
//!   non-Hermitian spectra.
//! * [`scaling_analysis`] contains every fit used for finite-size scaling.
//! * [`experiment`] runs parameter sweeps, persists records and reproduces
//!   the figure recipes.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod gaussian_states;
pub mod lattice_model;
pub mod linalg;
pub mod monitored_dynamics;
pub mod scaling_analysis;
pub mod spectral_theory;

pub use error::{Error, Result};
