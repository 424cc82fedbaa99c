//! Symmetric spectra and the algebra built on them.
//!
//! A [`Spectrum`] is the descending-sorted eigenvalue list of a symmetric
//! matrix. Everything downstream (phase, elementary symmetric polynomials,
//! cone membership, the eigenvalue inequalities in [`lemmas`]) is a pure
//! function of it.

mod dual;
mod lemmas;
mod sampling;

pub(crate) use sampling::is_admissible;
pub use dual::{dual_family, dual_pairing_min, dual_test_matrix, DualVector};
pub use lemmas::{
    check_lemma_general, check_lemma_n3, check_ratio_bound, ratio_bound_factor, ClauseOutcome,
    ClauseStatus, LemmaReport, DEGENERATE_GAP,
};
pub use sampling::{
    run_campaign, sample_admissible, CampaignConfig, CampaignSummary, ClauseStats, FuzzFamily,
    LemmaStats, DEFAULT_BOUNDS,
};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`eigen_desc`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues sorted in descending order, `values[0]` is the largest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    /// Canonicalizes `values` by sorting them in descending order.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("spectrum must have at least one value".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("spectrum value {v}")));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Spectrum { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest eigenvalue.
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    /// Smallest eigenvalue.
    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Inequality tolerance `1e-10 (1 + max|λ|)^2` used by every checker.
    pub fn tolerance(&self) -> f64 {
        1e-10 * (1.0 + self.max_abs()).powi(2)
    }

    /// Adds `shift` to every eigenvalue (the spectrum of `M + shift I`).
    pub fn shifted(&self, shift: f64) -> Spectrum {
        Spectrum { values: self.values.iter().map(|v| v + shift).collect() }
    }

    /// Average of the `m` largest eigenvalues.
    pub fn top_mean(&self, m: usize) -> f64 {
        self.values[..m].iter().sum::<f64>() / m as f64
    }
}

impl TryFrom<Vec<f64>> for Spectrum {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Spectrum::new(values)
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(s: Spectrum) -> Self {
        s.values
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if let Some(v) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("matrix entry {v}")));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let asym = (m[(i, j)] - m[(j, i)]).abs() / scale;
            if asym > SYMMETRY_TOL {
                return Err(Error::NotSymmetric { row: i, col: j, asymmetry: asym });
            }
        }
    }
    Ok(())
}

/// Eigen-decomposition with descending eigenvalues; the basis is kept crate-internal.
pub(crate) fn eigen_decompose(m: &DMatrix<f64>) -> Result<(Spectrum, DMatrix<f64>)> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let basis = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((Spectrum { values }, basis))
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn eigen_desc(m: &DMatrix<f64>) -> Result<Spectrum> {
    eigen_decompose(m).map(|(s, _)| s)
}

/// `e[k]` holds the k-th elementary symmetric polynomial of `values`, for `k <= max_k`.
pub(crate) fn elementary_symmetric(values: &[f64], max_k: usize) -> Vec<f64> {
    let mut e = vec![0.0; max_k + 1];
    e[0] = 1.0;
    for (seen, &x) in values.iter().enumerate() {
        let top = (seen + 1).min(max_k);
        for k in (1..=top).rev() {
            e[k] += x * e[k - 1];
        }
    }
    e
}

/// The k-th elementary symmetric polynomial σ_k; σ_0 = 1.
pub fn sigma_k(s: &Spectrum, k: usize) -> Result<f64> {
    if k > s.len() {
        return Err(Error::IndexOutOfRange { index: k, len: s.len() + 1 });
    }
    Ok(elementary_symmetric(&s.values, k)[k])
}

/// ∂σ_k/∂λ_i, which is σ_{k-1} of the spectrum with entry `i` (0-based) removed.
pub fn sigma_k_partial(s: &Spectrum, k: usize, i: usize) -> Result<f64> {
    if k == 0 || k > s.len() {
        return Err(Error::InvalidArgument(format!("derivative order k = {k} outside 1..={}", s.len())));
    }
    if i >= s.len() {
        return Err(Error::IndexOutOfRange { index: i, len: s.len() });
    }
    let rest: Vec<f64> = s.values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect();
    Ok(elementary_symmetric(&rest, k - 1)[k - 1])
}

/// Σ arctan λ_i, the left-hand side of the special Lagrangian equation.
pub fn phase(s: &Spectrum) -> f64 {
    s.values.iter().map(|v| v.atan()).sum()
}

/// The eigenvalue cone `{σ_{n-1} > c λ_2 ⋯ λ_n, λ_{n-1} > 0}` or its closure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub n: usize,
    pub c: f64,
    pub closed: bool,
}

impl ConeSpec {
    pub fn new(n: usize, c: f64, closed: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("cone dimension {n} < 2")));
        }
        if !c.is_finite() {
            return Err(Error::NonFinite(format!("cone constant {c}")));
        }
        Ok(ConeSpec { n, c, closed })
    }

    /// The closed cone with `c = (n - 2) / 2`.
    pub fn canonical(n: usize) -> Result<Self> {
        Self::new(n, (n as f64 - 2.0) / 2.0, true)
    }
}

/// `σ_{n-1} - c λ_2 ⋯ λ_n` and `λ_{n-1}`; both nonnegative on the closed cone.
pub(crate) fn cone_margins(s: &Spectrum, c: f64) -> (f64, f64) {
    let n = s.len();
    let e = elementary_symmetric(&s.values, n - 1);
    let tail: f64 = s.values[1..].iter().product();
    (e[n - 1] - c * tail, s.values[n - 2])
}

/// Cone membership; a spectrum of the wrong length is never a member.
pub fn in_gamma_cone(s: &Spectrum, cone: &ConeSpec) -> bool {
    if s.len() != cone.n || s.len() < 2 {
        return false;
    }
    let (sigma, second_last) = cone_margins(s, cone.c);
    if cone.closed {
        sigma >= 0.0 && second_last >= 0.0
    } else {
        sigma > 0.0 && second_last > 0.0
    }
}

/// Which eigenvalue hypothesis a solution is asked to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    /// Closed cone with `c = (n - 2) / 2`.
    GammaCone { n: usize },
    /// `σ_2 ≥ (3/5 - ε) λ_2 λ_3` in dimension three.
    Sigma2Lower { eps: f64 },
}

impl ConstraintSpec {
    pub fn gamma_cone(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("cone dimension {n} < 2")));
        }
        Ok(ConstraintSpec::GammaCone { n })
    }

    pub fn sigma2_lower(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma2 constraint needs eps > 0, got {eps}")));
        }
        Ok(ConstraintSpec::Sigma2Lower { eps })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSpec::GammaCone { n } => *n,
            ConstraintSpec::Sigma2Lower { .. } => 3,
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match self {
            ConstraintSpec::GammaCone { .. } => None,
            ConstraintSpec::Sigma2Lower { eps } => Some(*eps),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ConstraintSpec::GammaCone { n } => format!("cone(n={n})"),
            ConstraintSpec::Sigma2Lower { eps } => format!("sigma2(eps={eps})"),
        }
    }
}

/// `σ_2 - (3/5 - ε) λ_2 λ_3`.
pub(crate) fn sigma2_margin(s: &Spectrum, eps: f64) -> f64 {
    let v = &s.values;
    let e = elementary_symmetric(v, 2);
    e[2] - (0.6 - eps) * v[1] * v[2]
}

/// Checks the constraint; the σ_2 family allows a rounding slack of `1e-12 (1 + max|λ|)^2`.
pub fn satisfies_constraint(s: &Spectrum, spec: &ConstraintSpec) -> Result<bool> {
    if s.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: s.len() });
    }
    Ok(match *spec {
        ConstraintSpec::GammaCone { n } => in_gamma_cone(s, &ConeSpec::canonical(n)?),
        ConstraintSpec::Sigma2Lower { eps } => {
            sigma2_margin(s, eps) >= -1e-12 * (1.0 + s.max_abs()).powi(2)
        }
    })
}

/// 2-convexity: σ_1 ≥ 0 and σ_2 ≥ 0.
pub fn two_convexity(s: &Spectrum) -> bool {
    two_convexity_margin(s) >= 0.0
}

/// `min(σ_1, σ_2)`.
pub fn two_convexity_margin(s: &Spectrum) -> f64 {
    let e = elementary_symmetric(&s.values, 2.min(s.len()));
    if s.len() < 2 {
        return e[1];
    }
    e[1].min(e[2])
}
