//! Finite-difference laboratory for the ε-regularized parabolic normalized
//! p-Laplace equation
//!
//! ```text
//! u_t = Δu + (p - 2) <∇u, D²u ∇u> / (|∇u|² + ε²)
//! ```
//!
//! on boxes in one and two space dimensions, together with numerical checks
//! of the gradient maximum principle, interior integral identities and the
//! a-priori L² bounds for second derivatives and the time derivative.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod calculus;
pub mod grid;
pub mod references;
pub mod solver;
pub mod verifier;

pub use calculus::{
    CriticalPointPolicy, CutoffFunction, CutoffValue, DerivativeBundle, GradVMode, SliceView,
    SymMatrix, Vector,
};
pub use grid::{NodeClass, Params, Point, Region, SpaceTimeField, SpaceTimeGrid};
pub use solver::{ProblemData, SolverError};
pub use verifier::{Comparison, EstimateReport, IdentityLedger, LevelRecord, VerifyError};
