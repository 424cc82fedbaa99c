//! Grid functions and the discrete geometry of their graphs.
//!
//! Derivatives are second-order central differences; the mixed derivative
//! uses the 4-point cross stencil. The induced metric `g = I + (D^2u)^2`, the
//! Laplace–Beltrami operator `Σ g^{ij} ∂_ij` and the Jacobi residual of `b_m`
//! are all built on these stencils.

mod function;
mod geometry;
mod grid;

pub use function::{GridFunction, MaskedField, Sampled};
pub use geometry::{
    b_m_field, induced_metric, jacobi_residual, jacobi_scan, jet, laplace_beltrami,
    minimal_surface_residual, minimal_surface_residual_norm, rescale, spectrum_field, JacobiOutcome,
    JacobiParams, JacobiScan, JetSample, CONE_JACOBI_ALPHA, CONE_JACOBI_DELTA,
};
pub use grid::{Grid, MAX_DIM};


pub(crate) use geometry::{raw_jet, spectrum_and_metric_inverse};
pub(crate) use grid::dist2;
