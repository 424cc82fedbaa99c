//! The dual-cone side: minimal pairings and the symmetric test matrices.

use nalgebra::DMatrix;

use super::Spectrum;
use crate::error::{Error, Result};

/// `min_π Σ a_i m_π(i)`, attained by pairing the sorted spectra in opposite order.
pub fn dual_pairing_min(a: &Spectrum, m: &Spectrum) -> Result<f64> {
    if a.len() != m.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: m.len() });
    }
    let n = a.len();
    Ok(a.values().iter().enumerate().map(|(i, x)| x * m.values()[n - 1 - i]).sum())
}

/// `I_3 + t (e_i ⊗ e_j + e_j ⊗ e_i)` for 0-based `i != j` and `0 < t ≤ 1/2`.
pub fn dual_test_matrix(t: f64, i: usize, j: usize) -> Result<DMatrix<f64>> {
    if !(t > 0.0 && t <= 0.5) {
        return Err(Error::InvalidArgument(format!("dual test parameter t = {t} outside (0, 1/2]")));
    }
    if i >= 3 || j >= 3 {
        return Err(Error::IndexOutOfRange { index: i.max(j), len: 3 });
    }
    if i == j {
        return Err(Error::InvalidArgument("dual test matrix needs i != j".into()));
    }
    let mut m = DMatrix::identity(3, 3);
    m[(i, j)] = t;
    m[(j, i)] = t;
    Ok(m)
}

/// A named eigenvalue vector of the dual family.
#[derive(Debug, Clone)]
pub struct DualVector {
    pub name: String,
    pub spectrum: Spectrum,
}

/// `(1,1,0), (1,0,1), (0,1,1), (1,1,1)` and `(1+t, 1-t, 1)` for each `t`.
///
/// The first three coincide as unordered sets; they are listed separately
/// because they are the spectra of the three matrices `A_i`.
pub fn dual_family(ts: &[f64]) -> Vec<DualVector> {
    let mut out: Vec<DualVector> = [("A1", [0.0, 1.0, 1.0]), ("A2", [1.0, 0.0, 1.0]), ("A3", [1.0, 1.0, 0.0]), ("I3", [1.0, 1.0, 1.0])]
        .into_iter()
        .map(|(name, v)| DualVector { name: name.into(), spectrum: Spectrum::new(v.to_vec()).unwrap() })
        .collect();
    for &t in ts {
        out.push(DualVector {
            name: format!("Aij(t={t})"),
            spectrum: Spectrum::new(vec![1.0 + t, 1.0 - t, 1.0]).unwrap(),
        });
    }
    out
}
