//! Numerical machinery for mixed Dirichlet/Neumann (Zaremba) boundary value
//! problems driven by singular or degenerate fully nonlinear elliptic
//! operators of the form
//!
//! ```text
//!     -|∇u|^α F(x, ∇u, D²u) + β(u) = f   in Ω,
//!     u = g on 𝒟,   ∂u/∂n = 0 on 𝒩.
//! ```
//!
//! The crate provides
//!
//! - exact Pucci extremal operators and sample-based falsifiers for the
//!   standard structure conditions ([`pucci`]),
//! - canonical planar domains with distance functions, boundary partitions
//!   and the flattening-diffeomorphism operator transform ([`geometry`]),
//! - explicit log/conical/cylindrical barrier families with closed-form
//!   derivatives and numeric supersolution certificates ([`barrier`]),
//! - a monotone wide-stencil finite difference scheme with ghost-cell
//!   Neumann reflection ([`scheme`]),
//! - pseudo-time and nonlinear Gauss-Seidel drivers, barrier clamping and
//!   the vanishing-zero-order existence sequence ([`solver`]),
//! - comparison gaps, Hölder exponent fits and grid refinement studies
//!   ([`analysis`]).

pub mod analysis;
pub mod barrier;
pub mod geometry;
pub mod grid;
pub mod matrix;
pub mod problem;
pub mod pucci;
pub mod scheme;
pub mod solver;

pub use matrix::SymMatrix;
pub use problem::{BetaSpec, DirichletSpec, OperatorKind, OperatorSpec, ProblemSpec, SourceSpec};
