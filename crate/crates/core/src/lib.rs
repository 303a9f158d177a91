//! Bound states of perturbed semi-Dirac Hamiltonians.
//!
//! Two independent routes to the discrete spectrum in the gap `(-delta, delta)`:
//!
//! - a meshfree Galerkin discretization on Gaussian radial basis functions
//!   ([`rbf`], [`assembly`], [`eigensolve`]) that computes gap eigenvalues;
//! - closed-form variational quantities ([`bounds`], [`testfn`]) that decide
//!   existence and bound the eigenvalues from above.
//!
//! [`pipeline`] ties both together into reproducible sweeps over the coupling.

// NaN must fail range checks, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod assembly;
pub mod bounds;
pub mod eigensolve;
pub mod model;
pub mod pipeline;
pub mod quadrature;
pub mod rbf;
pub mod testfn;

pub use geometry::{Rect, Vec2};
