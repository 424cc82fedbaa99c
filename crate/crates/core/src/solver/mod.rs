//! Damped Newton solver for the Dirichlet problem `Σ arctan λ_i(D^2u) = θ`
//! on a box, and generators of manufactured problems.
//!
//! The residual and its Jacobian share the stencils of [`crate::field`], so
//! the linearization `v ↦ Σ g^{ij} D_ij v` is the exact derivative of the
//! discrete residual.

mod family;
mod newton;
mod sparse;

pub use family::{instance_family, quadratic_solution, FamilyConfig, InstanceSpec, DEFAULT_AMPLITUDES};
pub use newton::{
    coarsen, constraint_violation_fraction, directional_defect, harmonic_extension, observed_order, newton_solve, newton_solve_with, prolongate, sle_linearization,
    sle_residual, NewtonOptions, PhaseProblem, ProblemMeta, SolveOutcome,
};
pub use sparse::{bicgstab, solve_linear, solve_linear_rel, LinearStrategy, SparseMatrix, DIRECT_LIMIT, ITERATIVE_TOL};
