//! Linear response of chaotic maps and flows through tangent and adjoint
//! nonintrusive shadowing.
//!
//! The crate computes the shadowing contribution `SC` to the derivative of a
//! long-time average with respect to a system parameter, along a single
//! orbit, in two independent ways:
//!
//! * [`tangent`]: the bounded solution `v` (with time dilation `eta` for
//!   flows) of the inhomogeneous tangent equation, recovered from one
//!   particular solution plus `u` homogeneous ones;
//! * [`adjoint`]: the bounded solution `nu` of the inhomogeneous adjoint
//!   equation, recovered the same way backward in time.
//!
//! [`splitting`] computes Lyapunov exponents, covariant Lyapunov vectors and
//! their duals, and evaluates the split-propagate expansions of `v` and `nu`
//! as oracles for both solvers. [`response`] assembles `SC`, compares it with
//! finite-difference and Ruelle-series baselines, and reports the remainder.

pub mod adjoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod par;
pub mod response;
mod segments;
pub mod splitting;
pub mod stats;
pub mod systems;
pub mod tangent;
pub mod validation;

pub use error::{Error, Result};
pub use stats::Estimate;
pub use systems::{LinearizedOrbit, Observable, Orbit, SystemKind, SystemSpec};
