//! Learning linear representations from contrastive samples.
//!
//! A contrastive sample `(x, y, z, b)` states whether the anchor `x` is closer
//! to `y` or to `z` under an unknown linear map `W`. Lifting `WᵀW` to a single
//! positive semidefinite Gram matrix `G` turns the hinge-loss empirical risk
//! into a convex program over a trace ball or an entrywise ℓ1 ball, which this
//! crate solves by projected subgradient descent. The learned `Ĝ` is factored
//! back into a representation `Ŵ` and checked against Rademacher-complexity
//! generalization bounds on held-out data.
//!
//! Module map:
//!
//! * [`linalg`]: symmetric matrices, Jacobi eigendecomposition, norms.
//! * [`projection`]: Euclidean projections onto both feasible sets.
//! * [`data`]: samples, datasets, lifting, JSON-lines I/O.
//! * [`synth`]: planted-target dataset generation.
//! * [`solver`]: hinge objectives, subgradients and the projected solver.
//! * [`bounds`]: closed-form bounds and a Monte-Carlo Rademacher estimate.
//! * [`eval`]: recovery of `Ŵ`, error rates and certificates.
//! * [`oracle`]: brute-force checks on tiny instances.
//! * [`cli`]: the `cpac` command line.

pub mod bounds;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod oracle;
pub mod projection;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{EigenDecomposition, SymMatrix};
pub use solver::{ConstraintSet, SolveReport, SolverConfig};
