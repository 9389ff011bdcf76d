//! Monotone discretizations of the jump, drift, diffusion and Lévy parts, and
//! the extremal operators.

mod assemble;
mod dump;
mod pucci;
mod quadrature;

pub use assemble::{assemble, assemble_parts, ControlStencil, DiscreteOperator, Parts};
pub use dump::{dump_stencils, stencil_rows, StencilEntry, StencilRow};
pub use pucci::{pucci_extremal, PucciSign};
pub use quadrature::{build_quadrature, JumpQuadrature, Offset};

#[cfg(test)]
mod tests;
