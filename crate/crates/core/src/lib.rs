//! Numerical laboratory for distribution-dependent SDEs
//!
//! ```text
//! X_t = ∫₀ᵗ B_s(X_s, L(X_s)) ds + Y_t
//! ```
//!
//! driven by an arbitrary continuous input process `Y`, and for the associated
//! `N`-particle systems. Laws are represented by ensembles of sampled paths;
//! solutions are constructed either by a coupled explicit Euler scheme or by a
//! Picard fixed point on the ensemble, and the stability estimates available for
//! Lipschitz, Osgood, monotone, locally Lipschitz and convolutional drifts are
//! evaluated side by side with simulation.
//!
//! Modules:
//!
//! * [`measures`]: time grids, paths, empirical measures, norms and exact
//!   Wasserstein distances.
//! * [`noise`]: input ensembles `Y = ξ + W`.
//! * [`drifts`]: drift families, the inf-convolution Lipschitz approximation and
//!   kernel mollification.
//! * [`solver`]: frozen-flow Euler, the coupled particle system and Picard.
//! * [`bounds`]: closed-form and quadrature stability bounds.
//! * [`maximal`]: discrete maximal functions and the inequalities built on them.
//! * [`harness`]: configuration, experiments and reports behind the CLI.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod drifts;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod maximal;
pub mod measures;
pub mod noise;
pub mod solver;

pub use error::{Error, Result};
