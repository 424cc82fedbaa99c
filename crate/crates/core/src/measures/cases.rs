use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::bump::TestFunction;
use super::pairing::{hessian_pairings, t_a_from_pairings};
use super::shift::shifted_solution;
use crate::error::{Error, Result};
use crate::field::{spectrum_field, GridFunction};
use crate::spectral::{dual_test_matrix, two_convexity, ConstraintSpec, Spectrum};

/// Which positivity argument applies to an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofCase {
    /// `n ≥ 4`: the spectra are 2-convex.
    TwoConvex,
    /// `n = 3` cone.
    ConeDual,
    /// σ_2 bound with `λ_2 ≥ 0` at every node.
    Sigma2Dual,
    /// σ_2 bound with some `λ_2 < 0`; tested on the shifted solution.
    Sigma2ShiftedDual,
}

/// Routes an instance by its constraint and nodal spectra.
pub fn classify_case<'a>(constraint: &ConstraintSpec, spectra: impl IntoIterator<Item = &'a Spectrum>) -> Result<ProofCase> {
    match *constraint {
        ConstraintSpec::GammaCone { n } if n >= 4 => Ok(ProofCase::TwoConvex),
        ConstraintSpec::GammaCone { n: 3 } => Ok(ProofCase::ConeDual),
        ConstraintSpec::GammaCone { n } => Err(Error::InvalidArgument(format!("no positivity case for the cone with n = {n}"))),
        ConstraintSpec::Sigma2Lower { .. } => {
            if spectra.into_iter().any(|s| s.values()[1] < 0.0) {
                Ok(ProofCase::Sigma2ShiftedDual)
            } else {
                Ok(ProofCase::Sigma2Dual)
            }
        }
    }
}

/// `A_i` (identity with the i-th diagonal entry zeroed), `I`, and
/// `I + t (e_i ⊗ e_j + e_j ⊗ e_i)` for `i < j`.
pub fn dual_matrices(n: usize, t: f64) -> Result<Vec<(String, DMatrix<f64>)>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("dual family needs n ≥ 2, got {n}")));
    }
    let mut out = Vec::new();
    for i in 0..n {
        let mut a = DMatrix::identity(n, n);
        a[(i, i)] = 0.0;
        out.push((format!("A{}", i + 1), a));
    }
    out.push((format!("I{n}"), DMatrix::identity(n, n)));
    for i in 0..n {
        for j in i + 1..n {
            let a = if n == 3 {
                dual_test_matrix(t, i, j)?
            } else {
                let mut a = DMatrix::identity(n, n);
                a[(i, j)] = t;
                a[(j, i)] = t;
                a
            };
            out.push((format!("A{}{}(t={t})", i + 1, j + 1), a));
        }
    }
    Ok(out)
}

/// Five nonnegative bumps inside `B_1(c)`.
pub fn default_bumps(center: &[f64]) -> Result<Vec<TestFunction>> {
    let mut out = vec![TestFunction::new(center.to_vec(), 0.6)?];
    for axis in 0..2.min(center.len()) {
        for sign in [1.0, -1.0] {
            let mut c = center.to_vec();
            c[axis] += sign * 0.3;
            out.push(TestFunction::new(c, 0.5)?);
        }
    }
    Ok(out)
}

/// `T_A(φ)` for one bump and one dual matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityEntry {
    pub bump: usize,
    pub matrix: String,
    pub value: f64,
    /// `Σ |A_ij| · discrepancy_ij`.
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub case: ProofCase,
    /// Nodes of the tested ball that fail 2-convexity (only counted for [`ProofCase::TwoConvex`]).
    pub two_convexity_failures: usize,
    pub entries: Vec<PositivityEntry>,
}

impl PositivityReport {
    pub fn min_value(&self) -> f64 {
        self.entries.iter().map(|e| e.value).fold(f64::INFINITY, f64::min)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.two_convexity_failures == 0 && self.min_value() >= -tol
    }
}

/// Classifies `u` on `B_1` of its grid center and evaluates `T_A` over the
/// dual family at `t` for every bump, shifting `u` first in the shifted case.
pub fn positivity_check(u: &GridFunction, constraint: &ConstraintSpec, bumps: &[TestFunction], t: f64) -> Result<PositivityReport> {
    let g = u.grid();
    if g.dim() != constraint.dim() {
        return Err(Error::DimensionMismatch { expected: constraint.dim(), got: g.dim() });
    }
    let ball = g.nodes_in_ball(g.center(), 1.0);
    let field = spectrum_field(u);
    let spectra: Vec<&Spectrum> = ball.iter().filter_map(|&k| field[k].as_ref()).collect();
    let case = classify_case(constraint, spectra.iter().copied())?;
    let two_convexity_failures = match case {
        ProofCase::TwoConvex => spectra.iter().filter(|s| !two_convexity(s)).count(),
        _ => 0,
    };
    let shifted;
    let target = match (case, constraint.eps()) {
        (ProofCase::Sigma2ShiftedDual, Some(eps)) => {
            shifted = shifted_solution(u, eps)?;
            &shifted
        }
        _ => u,
    };
    let family = dual_matrices(g.dim(), t)?;
    let mut entries = Vec::new();
    for (b, phi) in bumps.iter().enumerate() {
        let p = hessian_pairings(target, phi)?;
        for (name, a) in &family {
            entries.push(PositivityEntry {
                bump: b,
                matrix: name.clone(),
                value: t_a_from_pairings(&p, a)?,
                discrepancy: a.abs().component_mul(&p.discrepancy).sum(),
            });
        }
    }
    Ok(PositivityReport { case, two_convexity_failures, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::spectral::eigen_desc;

    #[test]
    fn routing() {
        let pos = Spectrum::new(vec![3.0, 1.0, -0.5]).unwrap();
        let neg = Spectrum::new(vec![0.75, -0.3, -0.3]).unwrap();
        let s2 = ConstraintSpec::sigma2_lower(5.0).unwrap();
        assert_eq!(classify_case(&ConstraintSpec::gamma_cone(4).unwrap(), [&pos]).unwrap(), ProofCase::TwoConvex);
        assert_eq!(classify_case(&ConstraintSpec::gamma_cone(3).unwrap(), [&pos]).unwrap(), ProofCase::ConeDual);
        assert_eq!(classify_case(&s2, [&pos]).unwrap(), ProofCase::Sigma2Dual);
        assert_eq!(classify_case(&s2, [&pos, &neg]).unwrap(), ProofCase::Sigma2ShiftedDual);
        assert!(classify_case(&ConstraintSpec::gamma_cone(2).unwrap(), [&pos]).is_err());
    }

    #[test]
    fn dual_matrices_have_expected_spectra() {
        for n in [3, 4, 5] {
            let fam = dual_matrices(n, 0.5).unwrap();
            assert_eq!(fam.len(), n + 1 + n * (n - 1) / 2);
            for (name, a) in fam.iter().filter(|(name, _)| name.contains("(t=")) {
                let s = eigen_desc(a).unwrap();
                assert!((s.max() - 1.5).abs() < 1e-12 && (s.min() - 0.5).abs() < 1e-12, "{name}");
            }
        }
    }

    #[test]
    fn shifted_path_on_negative_branch_quadratic() {
        let g = Grid::centered(3, 2.0, 33).unwrap();
        let u = GridFunction::from_fn(g.clone(), |x| 0.5 * (0.75 * x[0] * x[0] - 0.3 * x[1] * x[1] - 0.3 * x[2] * x[2])).unwrap();
        let s2 = ConstraintSpec::sigma2_lower(5.0).unwrap();
        let r = positivity_check(&u, &s2, &default_bumps(&[0.0; 3]).unwrap(), 0.5).unwrap();
        assert_eq!(r.case, ProofCase::Sigma2ShiftedDual);
        assert_eq!(r.entries.len(), 5 * 7);
        assert!(r.passed(1e-9), "{}", r.min_value());
    }
}
