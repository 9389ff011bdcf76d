//! Monotone finite-difference/quadrature schemes for ergodic and discounted
//! Hamilton–Jacobi–Bellman equations with nonlocal (fractional, stable-like)
//! operators on `ℝ^d`, `d ∈ {1, 2}`:
//!
//! ```text
//! inf_τ ( L_τ u + g_τ ) − λ* = 0,   u(0) = 0,
//! L_τ u = ∫ δ(u, x, y) k_τ(x, y) |y|^{−d−2s} dy + b_τ · ∇u   (+ tr(a_τ D²u) + Ĭ_τ u)
//! ```
//!
//! The pipeline mirrors the classical constructive route: Dirichlet problems
//! on growing balls ([`ergodic::expand_domain`]), discounted problems solved
//! by policy iteration ([`discounted`]), and the vanishing-discount limit
//! ([`ergodic::vanishing_discount`]). Foster–Lyapunov certificates
//! ([`lyapunov`]), barrier bounds and extremal operators serve as diagnostics;
//! [`oracle`] holds slow independent references used by the tests.
//!
//! See `examples/` for one runnable program per capability.

// `!(x > 0.0)` rejects NaN along with the non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

pub mod discounted;
pub mod ergodic;
pub mod error;
pub mod grid;
pub mod harness;
pub mod linsolve;
pub mod lyapunov;
pub mod numerics;
pub mod operator;
pub mod oracle;
pub mod problem;

pub use error::{HjbError, Result};
pub use grid::{build_grid, evaluate_extended, ExteriorRule, FarField, Grid};
pub use operator::{assemble, build_quadrature, DiscreteOperator, JumpQuadrature};
pub use problem::{example_1_1_problem, Control, ControlProblem, KernelSpec};
