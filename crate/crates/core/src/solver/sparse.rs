use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Par;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row entry lists; duplicate columns within a row are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                if cols.len() > start && *cols.last().expect("nonempty") == c {
                    *vals.last_mut().expect("nonempty") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(column, value)` pairs of row `r`, sorted by column.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().with_min_len(4096).for_each(|(r, out)| {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *out = s;
        });
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, String> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                t.push(Triplet::new(r, c, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &t).map_err(|e| format!("{e:?}"))
    }
}

/// Unknown count up to which the direct factorization is used.
pub const DIRECT_LIMIT: usize = 25 * 25 * 25;

/// Choice of linear solver for Newton steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinearStrategy {
    /// Direct below [`DIRECT_LIMIT`] unknowns, iterative above.
    #[default]
    Auto,
    Direct,
    Iterative,
}

/// Tightest relative residual target of the iterative solver.
pub const ITERATIVE_TOL: f64 = 1e-13;

/// Solves `A x = b`; the error string describes the breakdown.
pub fn solve_linear(a: &SparseMatrix, b: &[f64], strategy: LinearStrategy) -> Result<Vec<f64>, String> {
    solve_linear_rel(a, b, strategy, ITERATIVE_TOL)
}

/// As [`solve_linear`], with relative residual target `rel_tol` for the
/// iterative branch (clamped below by [`ITERATIVE_TOL`]).
pub fn solve_linear_rel(a: &SparseMatrix, b: &[f64], strategy: LinearStrategy, rel_tol: f64) -> Result<Vec<f64>, String> {
    let direct = match strategy {
        LinearStrategy::Auto => a.dim() <= DIRECT_LIMIT,
        LinearStrategy::Direct => true,
        LinearStrategy::Iterative => false,
    };
    let x = if direct {
        solve_direct(a, b)?
    } else {
        bicgstab(a, b, rel_tol.max(ITERATIVE_TOL), 20 * a.dim().max(100))?
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err("solution has non-finite entries".into());
    }
    Ok(x)
}

fn solve_direct(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, String> {
    faer::set_global_parallelism(Par::Seq);
    let m = a.to_faer()?;
    let lu = m.sp_lu().map_err(|e| format!("sparse LU failed: {e:?}"))?;
    let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
    let x = lu.solve(&rhs);
    Ok((0..b.len()).map(|i| x[i]).collect())
}

/// Incomplete LU factorization with the sparsity pattern of `A`.
struct Ilu0 {
    lu: SparseMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &SparseMatrix) -> Result<Self, String> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_pos = vec![usize::MAX; n];
        for r in 0..n {
            for k in lu.row_ptr[r]..lu.row_ptr[r + 1] {
                if lu.cols[k] == r {
                    diag_pos[r] = k;
                }
            }
            if diag_pos[r] == usize::MAX {
                return Err(format!("row {r} has no diagonal entry"));
            }
        }
        for i in 0..n {
            for kk in lu.row_ptr[i]..diag_pos[i] {
                let k = lu.cols[kk];
                let pivot = lu.vals[diag_pos[k]];
                if pivot == 0.0 {
                    return Err(format!("zero pivot in row {k}"));
                }
                let lik = lu.vals[kk] / pivot;
                lu.vals[kk] = lik;
                let row_k = lu.row_ptr[k]..lu.row_ptr[k + 1];
                for jj in kk + 1..lu.row_ptr[i + 1] {
                    let j = lu.cols[jj];
                    if let Ok(pos) = lu.cols[row_k.clone()].binary_search(&j) {
                        lu.vals[jj] -= lik * lu.vals[row_k.start + pos];
                    }
                }
            }
        }
        Ok(Ilu0 { lu, diag_pos })
    }

    fn apply(&self, r: &[f64], out: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..self.diag_pos[i] {
                s -= lu.vals[k] * out[lu.cols[k]];
            }
            out[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = out[i];
            for k in self.diag_pos[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.vals[k] * out[lu.cols[k]];
            }
            out[i] = s / lu.vals[self.diag_pos[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // fixed-order chunked reduction keeps the result independent of the thread count
    a.par_chunks(8192)
        .zip(b.par_chunks(8192))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// ILU(0)-preconditioned BiCGSTAB, stopping at `‖b - Ax‖ ≤ tol ‖b‖`.
pub fn bicgstab(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>, String> {
    let n = a.dim();
    let pre = Ilu0::new(a)?;
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err("BiCGSTAB breakdown".into());
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut().zip(&r).zip(&v).for_each(|((p, r), v)| *p = r + beta * (*p - omega * v));
        pre.apply(&p, &mut y);
        a.matvec_into(&y, &mut v);
        let denom = dot(&r0, &v);
        if denom == 0.0 {
            return Err("BiCGSTAB breakdown".into());
        }
        alpha = rho / denom;
        r.par_iter_mut().zip(&v).for_each(|(r, v)| *r -= alpha * v);
        x.par_iter_mut().zip(&y).for_each(|(x, y)| *x += alpha * y);
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        pre.apply(&r, &mut z);
        a.matvec_into(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err("BiCGSTAB breakdown".into());
        }
        omega = dot(&t, &r) / tt;
        x.par_iter_mut().zip(&z).for_each(|(x, z)| *x += omega * z);
        r.par_iter_mut().zip(&t).for_each(|(r, t)| *r -= omega * t);
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
    }
    let rel = norm(&r) / bnorm;
    Err(format!("BiCGSTAB did not converge in {max_iter} iterations (relative residual {rel:.3e})"))
}
