//! Distributional Hessian pairings against compactly supported bumps, the
//! dual-family functionals `T_A`, the spectral shift, discrete Lipschitz
//! norms and quadratic approximation probes.

mod approx;
mod bump;
mod cases;
mod lipschitz;
mod pairing;
mod shift;

pub use approx::{quadratic_approx_probe, ApproxPoint};
pub use bump::TestFunction;
pub use cases::{
    classify_case, default_bumps, dual_matrices, positivity_check, PositivityEntry, PositivityReport, ProofCase,
};
pub use lipschitz::{
    lipschitz_norm, lipschitz_pairs, weighted_lipschitz, LipschitzNorm, WeightedLipschitz, DEFAULT_SUBSAMPLE,
    EXHAUSTIVE_LIMIT,
};
pub use pairing::{
    distributional_hessian_pairing, hessian_pairings, t_a_from_pairings, t_a_functional, PairingMatrix, PairingResult,
};
pub use shift::{shift_amount, shifted_solution, unshifted_solution};
