use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bump::TestFunction;
use crate::error::{Error, Result};
use crate::field::{jet, GridFunction, MAX_DIM};

/// `∫ u ∂_ij φ` by grid quadrature, with its integration-by-parts discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub value: f64,
    /// Nodes inside the open support of `φ`.
    pub nodes: usize,
    pub spacing: f64,
    /// `|∫ u ∂_ij φ - ∫ (∂_ij u)_FD φ|`.
    pub discrepancy: f64,
}

/// All `n x n` pairings of one bump, from a single pass over its support.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingMatrix {
    pub values: DMatrix<f64>,
    pub discrepancy: DMatrix<f64>,
    pub nodes: usize,
    pub spacing: f64,
}

impl PairingMatrix {
    pub fn get(&self, i: usize, j: usize) -> PairingResult {
        PairingResult {
            value: self.values[(i, j)],
            nodes: self.nodes,
            spacing: self.spacing,
            discrepancy: self.discrepancy[(i, j)],
        }
    }
}

fn support_nodes(u: &GridFunction, phi: &TestFunction) -> Result<Vec<usize>> {
    let g = u.grid();
    if phi.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: phi.dim() });
    }
    // every node of the closed support needs a full Hessian stencil
    let margin = g.half_width() - g.spacing();
    for (c, g0) in phi.center().iter().zip(g.center()) {
        if (c - g0).abs() + phi.radius() > margin + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "bump support B_{}({:?}) escapes the grid interior",
                phi.radius(),
                phi.center()
            )));
        }
    }
    Ok(g.nodes_in_ball(phi.center(), phi.radius()))
}

/// Trapezoidal quadrature of `∫ u ∂_ij φ` for every `(i, j)`.
///
/// `φ` and its derivatives vanish on the support boundary, so the trapezoidal
/// weights reduce to `Δx^n` on the nodes inside.
pub fn hessian_pairings(u: &GridFunction, phi: &TestFunction) -> Result<PairingMatrix> {
    let nodes = support_nodes(u, phi)?;
    let g = u.grid();
    let n = g.dim();
    let h = g.spacing();
    let w = h.powi(n as i32);
    let zero = || ([[0.0; MAX_DIM]; MAX_DIM], [[0.0; MAX_DIM]; MAX_DIM]);
    let (a, b) = nodes
        .par_iter()
        .map(|&k| -> Result<_> {
            let x = g.position(k);
            let j = jet(u, k)?;
            let p = phi.value(&x);
            let mut a = zero().0;
            let mut b = zero().1;
            for r in 0..n {
                for c in 0..n {
                    a[r][c] = u.value(k) * phi.second_derivative(&x, r, c);
                    b[r][c] = j.hessian[(r, c)] * p;
                }
            }
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(zero(), |(mut sa, mut sb), (a, b)| {
            for r in 0..n {
                for c in 0..n {
                    sa[r][c] += a[r][c];
                    sb[r][c] += b[r][c];
                }
            }
            (sa, sb)
        });
    Ok(PairingMatrix {
        values: DMatrix::from_fn(n, n, |r, c| w * a[r][c]),
        discrepancy: DMatrix::from_fn(n, n, |r, c| (w * (a[r][c] - b[r][c])).abs()),
        nodes: nodes.len(),
        spacing: h,
    })
}

/// `∫ u ∂_ij φ` with its discrepancy against the finite-difference Hessian.
pub fn distributional_hessian_pairing(u: &GridFunction, phi: &TestFunction, i: usize, j: usize) -> Result<PairingResult> {
    let n = u.grid().dim();
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange { index: i.max(j), len: n });
    }
    Ok(hessian_pairings(u, phi)?.get(i, j))
}

/// `Σ A_ij P_ij` for a precomputed pairing matrix.
pub fn t_a_from_pairings(p: &PairingMatrix, a: &DMatrix<f64>) -> Result<f64> {
    let n = p.values.nrows();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
    }
    for r in 0..n {
        for c in 0..r {
            if a[(r, c)] != a[(c, r)] {
                return Err(Error::NotSymmetric { row: r, col: c, asymmetry: (a[(r, c)] - a[(c, r)]).abs() });
            }
        }
    }
    Ok(a.component_mul(&p.values).sum())
}

/// `T_A(φ) = ∫ u Σ a^{ij} ∂_ij φ`.
pub fn t_a_functional(u: &GridFunction, phi: &TestFunction, a: &DMatrix<f64>) -> Result<f64> {
    t_a_from_pairings(&hessian_pairings(u, phi)?, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use approx::assert_relative_eq;

    fn quad(a: [[f64; 3]; 3]) -> GridFunction {
        let g = Grid::centered(3, 1.0, 33).unwrap();
        GridFunction::from_fn(g, move |x| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += 0.5 * a[i][j] * x[i] * x[j];
                }
            }
            s
        })
        .unwrap()
    }

    #[test]
    fn quadratic_pairing_is_hessian_times_mass() {
        let a = [[2.0, 0.5, 0.0], [0.5, 1.0, -0.3], [0.0, -0.3, -1.0]];
        let u = quad(a);
        let phi = TestFunction::new(vec![0.1, 0.0, -0.1], 0.6).unwrap();
        let p = hessian_pairings(&u, &phi).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(p.values[(i, j)], a[i][j] * phi.integral(), epsilon = 2e-4);
                assert_eq!(p.values[(i, j)], p.values[(j, i)]);
            }
        }
    }

    #[test]
    fn zero_field_pairs_to_zero() {
        let u = GridFunction::zeros(Grid::centered(3, 1.0, 17).unwrap());
        let phi = TestFunction::new(vec![0.0; 3], 0.5).unwrap();
        let r = distributional_hessian_pairing(&u, &phi, 0, 2).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.discrepancy, 0.0);
    }

    #[test]
    fn escaping_support_is_rejected() {
        let u = GridFunction::zeros(Grid::centered(3, 1.0, 17).unwrap());
        let phi = TestFunction::new(vec![0.6, 0.0, 0.0], 0.5).unwrap();
        assert!(hessian_pairings(&u, &phi).is_err());
    }

    #[test]
    fn trace_form() {
        let g = Grid::centered(3, 1.0, 25).unwrap();
        let u = GridFunction::from_fn(g.clone(), |x| (x[0] * 1.3).sin() + x[1] * x[2] * x[2]).unwrap();
        let phi = TestFunction::new(vec![0.0; 3], 0.7).unwrap();
        let t = t_a_functional(&u, &phi, &DMatrix::identity(3, 3)).unwrap();
        let h = g.spacing();
        let direct: f64 = g
            .nodes_in_ball(&[0.0; 3], 0.7)
            .into_iter()
            .map(|k| {
                let x = g.position(k);
                u.value(k) * (0..3).map(|i| phi.second_derivative(&x, i, i)).sum::<f64>()
            })
            .sum::<f64>()
            * h.powi(3);
        assert_relative_eq!(t, direct, max_relative = 1e-12);
    }
}
