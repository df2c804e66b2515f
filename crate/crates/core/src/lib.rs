//! Numerical laboratory for prescribed-curvature equations on a compact
//! Heisenberg quotient lattice.
//!
//! The crate discretizes a compact contact 3-manifold as the finite quotient
//! of the integer Heisenberg group acting on a refined subgroup lattice, and
//! builds on top of it:
//!
//! - [`lattice`]: coset indexing, Cayley stencil, sampling and integration;
//! - [`formula`]: the quotient-compatible expression mini-language used by
//!   configuration files;
//! - [`linalg`]: matrix-free CG / MINRES, a dense Jacobi eigensolver used as
//!   an oracle at small sizes, and shifted inverse power iteration;
//! - [`operators`]: horizontal gradient, sub-Laplacian, the conformal
//!   Laplacian, the curvature map and its linearization;
//! - [`spectral`]: first eigenvalue, Yamabe-type quotient minimization and
//!   the sign trichotomy classifier;
//! - [`solvers`]: monotone upper/lower-solution iteration and damped Newton
//!   continuation for the prescribed-curvature equation;
//! - [`conformal`]: conformally deformed structures, pullbacks by lattice
//!   translations, necessary-condition checks and certification of
//!   curvature-equivalence candidates.
//!
//! All numerical kernels are generic over the scalar type through the
//! [`Scalar`] trait; `f64` aliases for the main types are exported at the
//! crate root.

pub mod conformal;
pub mod field;
pub mod formula;
pub mod lattice;
pub mod linalg;
pub mod operators;
pub mod scalar;
pub mod solvers;
pub mod spectral;

pub use scalar::Scalar;

/// `f64` field on the lattice.
pub type Field64 = field::Field<f64>;
/// `f64` field with a strict positivity invariant.
pub type PositiveField64 = field::PositiveField<f64>;
/// `f64` edge data (forward differences).
pub type EdgeField64 = field::EdgeField<f64>;
/// `f64` background structure (lattice + curvature + dimensional constants).
pub type Structure64 = operators::Structure<f64>;
/// `f64` conformally deformed structure.
pub type DeformedStructure64 = conformal::DeformedStructure<f64>;
/// `f64` solver options.
pub type SolveOptions64 = linalg::SolveOptions<f64>;
/// `f64` eigenpair result.
pub type SpectralResult64 = spectral::SpectralResult<f64>;
