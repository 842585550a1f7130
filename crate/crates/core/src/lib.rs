//! Quantum action principle for a free relativistic particle.
//!
//! The wave functional over world lines carries a quadratic phase whose
//! coefficients flow along the invariant parameter `c`. The crate evaluates
//! the action eigenvalue in closed form, in boundary-plus-quadrature form and
//! directly on a world-line lattice, checks the lattice action operator
//! against finite differences of the wave functional, and locates the
//! stationary point over the initial data and the invariant duration.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigenvalue;
pub mod error;
pub mod minkowski;
pub mod phase_flow;
pub mod phase_functional;
pub mod quadrature;
pub mod stationarity;
pub mod suite;
pub mod worldline;

pub use error::{Error, Result};
pub use minkowski::{Branch, FourVector, IntervalClass};
pub use phase_flow::{FlowCoefficients, FlowInitialData};
pub use worldline::{LapseProfile, Worldline};
