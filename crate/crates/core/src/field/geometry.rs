use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::function::{GridFunction, MaskedField, Sampled};
use super::grid::{Grid, MAX_DIM};
use crate::error::{Error, Result};
use crate::spectral::{eigen_decompose, satisfies_constraint, ConstraintSpec, Spectrum};

type Vec4 = [f64; MAX_DIM];
type Mat4 = [[f64; MAX_DIM]; MAX_DIM];

/// Central-difference gradient and Hessian at a node.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RawJet {
    pub grad: Vec4,
    pub hess: Mat4,
}

/// Stencil weights: `u_i` central, `u_ii` 3-point, `u_ij` 4-point cross.
/// The caller guarantees depth ≥ 2; `None` if a stencil node is excluded.
pub(crate) fn raw_jet(u: &impl Sampled, index: usize) -> Option<RawJet> {
    let grid = u.grid();
    let d = grid.dim();
    let h = grid.spacing();
    let c = u.sample(index)?;
    let mut grad = [0.0; MAX_DIM];
    let mut hess = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        let si = grid.stride(i);
        let p = u.sample(index + si)?;
        let m = u.sample(index - si)?;
        grad[i] = (p - m) / (2.0 * h);
        hess[i][i] = (p - 2.0 * c + m) / (h * h);
        for j in 0..i {
            let sj = grid.stride(j);
            let pp = u.sample(index + si + sj)?;
            let pm = u.sample(index + si - sj)?;
            let mp = u.sample(index - si + sj)?;
            let mm = u.sample(index - si - sj)?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Some(RawJet { grad, hess })
}

pub(crate) fn to_dmatrix(m: &Mat4, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |r, c| m[r][c])
}

/// Spectrum of `h` together with `(I + h^2)^{-1}` built in the eigenbasis.
pub(crate) fn spectrum_and_metric_inverse(h: &Mat4, d: usize) -> (Spectrum, Mat4) {
    let (s, basis) = eigen_decompose(&to_dmatrix(h, d)).expect("symmetric by construction");
    let mut ginv = [[0.0; MAX_DIM]; MAX_DIM];
    for (k, lam) in s.values().iter().enumerate() {
        let w = 1.0 / (1.0 + lam * lam);
        for r in 0..d {
            for c in 0..d {
                ginv[r][c] += w * basis[(r, k)] * basis[(c, k)];
            }
        }
    }
    (s, ginv)
}

fn require_depth(grid: &Grid, node: usize, required: usize) -> Result<()> {
    if node >= grid.len() {
        return Err(Error::IndexOutOfRange { index: node, len: grid.len() });
    }
    let depth = grid.depth(node);
    if depth < required {
        return Err(Error::InsufficientDepth { node, depth, required });
    }
    Ok(())
}

fn masked(node: usize) -> Error {
    Error::InvalidArgument(format!("stencil at node {node} touches an excluded value"))
}

/// First and second finite differences at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct JetSample {
    pub node: usize,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub spectrum: Spectrum,
    pub depth: usize,
}

/// Gradient, Hessian and its spectrum at `node`; requires depth ≥ 2.
pub fn jet(u: &impl Sampled, node: usize) -> Result<JetSample> {
    let grid = u.grid();
    require_depth(grid, node, 2)?;
    let raw = raw_jet(u, node).ok_or_else(|| masked(node))?;
    let d = grid.dim();
    let hessian = to_dmatrix(&raw.hess, d);
    let (spectrum, _) = eigen_decompose(&hessian)?;
    Ok(JetSample { node, gradient: raw.grad[..d].to_vec(), hessian, spectrum, depth: grid.depth(node) })
}

/// Induced graph metric `g = I + H^2` and its inverse.
pub fn induced_metric(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (s, basis) = eigen_decompose(h)?;
    let n = h.nrows();
    let sym = (h + h.transpose()) * 0.5;
    let g = DMatrix::identity(n, n) + &sym * &sym;
    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        s.values().iter().map(|l| 1.0 / (1.0 + l * l)),
    ));
    let ginv = &basis * w * basis.transpose();
    Ok((g, (&ginv + ginv.transpose()) * 0.5))
}

fn contract(a: &Mat4, b: &Mat4, d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

fn metric_inverse_at(u: &impl Sampled, node: usize) -> Result<Mat4> {
    let raw = raw_jet(u, node).ok_or_else(|| masked(node))?;
    Ok(spectrum_and_metric_inverse(&raw.hess, u.grid().dim()).1)
}

/// `Δ_g f = Σ g^{ij} f_ij` with the metric of `u`, at `node`.
pub fn laplace_beltrami(u: &impl Sampled, f: &impl Sampled, node: usize) -> Result<f64> {
    if !u.grid().same_layout(f.grid()) {
        return Err(Error::InvalidArgument("u and f live on different grids".into()));
    }
    require_depth(u.grid(), node, 2)?;
    let ginv = metric_inverse_at(u, node)?;
    let fj = raw_jet(f, node).ok_or_else(|| masked(node))?;
    Ok(contract(&ginv, &fj.hess, u.grid().dim()))
}

/// `Σ g^{ij} u_ijk`, with `u_ijk` the central difference of the Hessian field along `k`.
/// Requires depth ≥ 3.
pub fn minimal_surface_residual(u: &impl Sampled, node: usize, k: usize) -> Result<f64> {
    let grid = u.grid();
    if k >= grid.dim() {
        return Err(Error::IndexOutOfRange { index: k, len: grid.dim() });
    }
    require_depth(grid, node, 3)?;
    let ginv = metric_inverse_at(u, node)?;
    let sk = grid.stride(k);
    let hp = raw_jet(u, node + sk).ok_or_else(|| masked(node))?.hess;
    let hm = raw_jet(u, node - sk).ok_or_else(|| masked(node))?.hess;
    let d = grid.dim();
    let mut third = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            third[i][j] = (hp[i][j] - hm[i][j]) / (2.0 * grid.spacing());
        }
    }
    Ok(contract(&ginv, &third, d))
}

/// Euclidean norm over `k` of the minimal-surface residual at `node`.
pub fn minimal_surface_residual_norm(u: &impl Sampled, node: usize) -> Result<f64> {
    let mut s = 0.0;
    for k in 0..u.grid().dim() {
        s += minimal_surface_residual(u, node, k)?.powi(2);
    }
    Ok(s.sqrt())
}

/// Spectrum of the finite-difference Hessian at every node of depth ≥ 2.
pub fn spectrum_field(u: &impl Sampled) -> Vec<Option<Spectrum>> {
    let grid = u.grid();
    let d = grid.dim();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if grid.depth(i) < 2 {
                return None;
            }
            raw_jet(u, i).map(|j| eigen_decompose(&to_dmatrix(&j.hess, d)).expect("symmetric").0)
        })
        .collect()
}

/// Average of the `m` largest Hessian eigenvalues; excluded where depth < 2.
pub fn b_m_field(u: &impl Sampled, m: usize) -> Result<MaskedField> {
    let d = u.grid().dim();
    if m == 0 || m > d {
        return Err(Error::InvalidArgument(format!("block size m = {m} must lie in 1..={d}")));
    }
    let values = spectrum_field(u).into_iter().map(|s| s.map(|s| s.top_mean(m))).collect();
    MaskedField::new(u.grid().clone(), values)
}

/// Hypotheses and constants of the Jacobi inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiParams {
    /// Size of the top eigenvalue block averaged into `b_m`.
    pub m: usize,
    pub alpha: f64,
    pub delta: f64,
    /// `Some` selects the σ_2 lower-bound constraint (n = 3), `None` the cone.
    pub eps: Option<f64>,
    pub eigengap_tol: f64,
}

/// Constants used for the cone family, where no explicit values are published.
pub const CONE_JACOBI_ALPHA: f64 = 1.0 / 16.0;
pub const CONE_JACOBI_DELTA: f64 = 5.0;

impl JacobiParams {
    /// `α = min(1, ε)/16`, `δ = 4 min(1, ε)^{-1/2} + max(1, ε)`, gap `10 Δx`.
    pub fn for_sigma2(eps: f64, dx: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) || !(dx > 0.0) {
            return Err(Error::InvalidArgument(format!("need eps > 0 and dx > 0, got {eps}, {dx}")));
        }
        let e = eps.min(1.0);
        Ok(JacobiParams {
            m: 1,
            alpha: e / 16.0,
            delta: 4.0 / e.sqrt() + eps.max(1.0),
            eps: Some(eps),
            eigengap_tol: 10.0 * dx,
        })
    }

    pub fn for_cone(dx: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::InvalidArgument(format!("need dx > 0, got {dx}")));
        }
        Ok(JacobiParams {
            m: 1,
            alpha: CONE_JACOBI_ALPHA,
            delta: CONE_JACOBI_DELTA,
            eps: None,
            eigengap_tol: 10.0 * dx,
        })
    }

    pub fn for_constraint(spec: &ConstraintSpec, dx: f64) -> Result<Self> {
        match spec.eps() {
            Some(eps) => JacobiParams::for_sigma2(eps, dx),
            None => JacobiParams::for_cone(dx),
        }
    }

    pub fn with_block(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    /// Constraint enforced by the gate for dimension `n`; none for `n = 2`.
    pub fn constraint(&self, n: usize) -> Option<ConstraintSpec> {
        match self.eps {
            Some(eps) if n == 3 => ConstraintSpec::sigma2_lower(eps).ok(),
            Some(_) => None,
            None => ConstraintSpec::gamma_cone(n).ok(),
        }
    }
}

/// Jacobi residual at a node with the gate decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobiOutcome {
    /// `Δ_g b_m - (1 + α) |∇_g b_m|^2_g / b_m`.
    pub residual: f64,
    pub applicable: bool,
    /// `λ_m - λ_{m+1}`, infinite for `m = n`.
    pub eigengap: f64,
    pub lambda_max: f64,
    pub b_m: f64,
    /// Applicable node with `b_m ≤ 0`.
    pub anomaly: bool,
}

/// `b_m` computed on demand from `u`.
struct BmView<'a, S> {
    u: &'a S,
    m: usize,
}

impl<S: Sampled> Sampled for BmView<'_, S> {
    fn grid(&self) -> &Grid {
        self.u.grid()
    }

    fn sample(&self, index: usize) -> Option<f64> {
        if self.u.grid().depth(index) < 2 {
            return None;
        }
        let j = raw_jet(self.u, index)?;
        let d = self.u.grid().dim();
        Some(eigen_decompose(&to_dmatrix(&j.hess, d)).ok()?.0.top_mean(self.m))
    }
}

fn jacobi_with(u: &impl Sampled, b: &impl Sampled, node: usize, p: &JacobiParams) -> Result<JacobiOutcome> {
    let grid = u.grid();
    let d = grid.dim();
    if p.m == 0 || p.m > d {
        return Err(Error::InvalidArgument(format!("block size m = {} must lie in 1..={d}", p.m)));
    }
    require_depth(grid, node, 4)?;
    let uj = raw_jet(u, node).ok_or_else(|| masked(node))?;
    let (s, ginv) = spectrum_and_metric_inverse(&uj.hess, d);
    let bj = raw_jet(b, node).ok_or_else(|| masked(node))?;
    let bm = b.sample(node).ok_or_else(|| masked(node))?;
    let lb = contract(&ginv, &bj.hess, d);
    let mut grad2 = 0.0;
    for i in 0..d {
        for j in 0..d {
            grad2 += ginv[i][j] * bj.grad[i] * bj.grad[j];
        }
    }
    let v = s.values();
    let eigengap = if p.m == d { f64::INFINITY } else { v[p.m - 1] - v[p.m] };
    let constraint_ok = match p.constraint(d) {
        Some(c) => satisfies_constraint(&s, &c)?,
        None => true,
    };
    let applicable = s.max() > p.delta && eigengap > p.eigengap_tol && constraint_ok;
    let anomaly = applicable && bm <= 0.0;
    let residual = lb - (1.0 + p.alpha) * grad2 / bm;
    Ok(JacobiOutcome { residual, applicable, eigengap, lambda_max: s.max(), b_m: bm, anomaly })
}

/// Jacobi residual of `u` at `node`; requires depth ≥ 4.
pub fn jacobi_residual(u: &impl Sampled, node: usize, p: &JacobiParams) -> Result<JacobiOutcome> {
    jacobi_with(u, &BmView { u, m: p.m }, node, p)
}

/// Summary of the Jacobi residual over all nodes of depth ≥ 4.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobiScan {
    pub params: JacobiParams,
    pub threshold: f64,
    pub evaluated: usize,
    pub applicable: usize,
    /// Applicable nodes with residual below `-threshold`, or anomalous.
    pub violations: usize,
    pub anomalies: usize,
    /// Smallest residual over applicable nodes (`+∞` if none).
    pub worst_residual: f64,
    pub worst_node: Option<usize>,
}

impl JacobiScan {
    pub fn violation_fraction(&self) -> f64 {
        if self.applicable == 0 {
            0.0
        } else {
            self.violations as f64 / self.applicable as f64
        }
    }
}

/// Evaluates the Jacobi residual on every node of depth ≥ 4 and counts
/// applicable nodes whose residual falls below `-threshold`.
pub fn jacobi_scan(u: &GridFunction, p: &JacobiParams, threshold: f64) -> Result<JacobiScan> {
    let b = b_m_field(u, p.m)?;
    let grid = u.grid();
    let nodes = grid.nodes_with_depth(4);
    let outcomes = nodes
        .par_iter()
        .map(|&i| jacobi_with(u, &b, i, p).map(|o| (i, o)))
        .collect::<Result<Vec<_>>>()?;
    let mut scan = JacobiScan {
        params: *p,
        threshold,
        evaluated: outcomes.len(),
        applicable: 0,
        violations: 0,
        anomalies: 0,
        worst_residual: f64::INFINITY,
        worst_node: None,
    };
    for (i, o) in outcomes {
        if !o.applicable {
            continue;
        }
        scan.applicable += 1;
        if o.anomaly {
            scan.anomalies += 1;
        }
        if o.anomaly || o.residual < -threshold {
            scan.violations += 1;
        }
        if o.residual < scan.worst_residual {
            scan.worst_residual = o.residual;
            scan.worst_node = Some(i);
        }
    }
    Ok(scan)
}

/// `v(x) = u(c + R (x - c)) / R^2` on the grid shrunk by `R` around its center.
/// Node values are reused, so finite-difference Hessians agree exactly.
pub fn rescale(u: &GridFunction, factor: f64) -> Result<GridFunction> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!("rescale factor must be positive, got {factor}")));
    }
    let g = u.grid();
    let grid = Grid::new(g.center().to_vec(), g.half_width() / factor, g.points_per_axis())?;
    GridFunction::new(grid, u.values().iter().map(|v| v / (factor * factor)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::phase;
    use approx::assert_relative_eq;

    fn quad(grid: &Grid, a: &[[f64; 3]; 3]) -> GridFunction {
        GridFunction::from_fn(grid.clone(), |x| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += 0.5 * a[i][j] * x[i] * x[j];
                }
            }
            s + 0.3 * x[0] - 0.1
        })
        .unwrap()
    }

    fn g3() -> Grid {
        Grid::centered(3, 1.0, 9).unwrap()
    }

    #[test]
    fn jet_is_exact_on_quadratics() {
        let grid = g3();
        let a = [[1.0, 0.3, -0.2], [0.3, 2.0, 0.5], [-0.2, 0.5, -1.0]];
        let u = quad(&grid, &a);
        for node in grid.nodes_with_depth(2).into_iter().step_by(7) {
            let j = jet(&u, node).unwrap();
            let x = grid.position(node);
            for i in 0..3 {
                let g: f64 = (0..3).map(|k| a[i][k] * x[k]).sum::<f64>() + if i == 0 { 0.3 } else { 0.0 };
                assert!((j.gradient[i] - g).abs() <= 1e-12 * (1.0 + g.abs()));
                for k in 0..3 {
                    assert!((j.hessian[(i, k)] - a[i][k]).abs() <= 1e-12 * 4.0);
                }
            }
        }
    }

    #[test]
    fn jet_of_product_and_sine() {
        let grid = Grid::centered(2, 1.0, 41).unwrap();
        let c = grid.node_at(&[0.0, 0.0]).unwrap();
        let u = GridFunction::from_fn(grid.clone(), |x| x[0] * x[1]).unwrap();
        let j = jet(&u, c).unwrap();
        assert_relative_eq!(j.hessian[(0, 1)], 1.0, epsilon = 1e-12);
        assert!(j.hessian[(0, 0)].abs() < 1e-12);
        let s = GridFunction::from_fn(grid.clone(), |x| (x[0] + 0.4).sin()).unwrap();
        let h = grid.spacing();
        let j = jet(&s, c).unwrap();
        // Taylor remainder of the 3-point stencil is bounded by h^2/12 max|u''''|
        assert!((j.hessian[(0, 0)] + 0.4f64.sin()).abs() <= h * h / 12.0 + 1e-10);
    }

    #[test]
    fn jet_rejects_shallow_nodes() {
        let grid = g3();
        let u = GridFunction::zeros(grid.clone());
        assert!(matches!(jet(&u, 0), Err(Error::InsufficientDepth { .. })));
        assert!(jet(&u, grid.len()).is_err());
    }

    #[test]
    fn metric_examples() {
        let (g, gi) = induced_metric(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(g, DMatrix::identity(3, 3));
        assert_relative_eq!(gi, DMatrix::identity(3, 3), epsilon = 1e-15);
        let (_, gi) = induced_metric(&DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0, 3.0])).unwrap();
        assert_relative_eq!(gi, DMatrix::from_diagonal(&nalgebra::dvector![0.5, 0.2, 0.1]), epsilon = 1e-15);
        let h = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.5, -2.0, 0.3, 4.0, 0.5, 4.0, -3.0]);
        let (g, gi) = induced_metric(&h).unwrap();
        assert!((g * gi - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn laplace_beltrami_on_quadratic() {
        let grid = g3();
        let a = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -0.5]];
        let u = quad(&grid, &a);
        let c = grid.node_at(&[0.0; 3]).unwrap();
        let expected: f64 = [1.0f64, 2.0, -0.5].iter().map(|l| l / (1.0 + l * l)).sum();
        assert_relative_eq!(laplace_beltrami(&u, &u, c).unwrap(), expected, epsilon = 1e-12);
        let zero = GridFunction::zeros(grid.clone());
        let f = GridFunction::from_fn(grid.clone(), |x| x[0] * x[0] + 3.0 * x[1] * x[2]).unwrap();
        assert_relative_eq!(laplace_beltrami(&zero, &f, c).unwrap(), 2.0, epsilon = 1e-12);
        let k = GridFunction::from_fn(grid, |_| 4.0).unwrap();
        assert_eq!(laplace_beltrami(&u, &k, c).unwrap(), 0.0);
    }

    #[test]
    fn minimal_surface_residual_vanishes_on_quadratics() {
        let grid = g3();
        let u = quad(&grid, &[[1.0, 0.5, 0.0], [0.5, 2.0, 0.1], [0.0, 0.1, 3.0]]);
        for node in grid.nodes_with_depth(3) {
            assert!(minimal_surface_residual_norm(&u, node).unwrap() <= 1e-12 * 40.0);
        }
        assert!(minimal_surface_residual(&u, grid.len() / 2, 3).is_err());
        let shallow = grid.index(&[1, 4, 4]).unwrap();
        assert!(minimal_surface_residual(&u, shallow, 0).is_err());
    }

    #[test]
    fn b_m_examples_and_trace_identity() {
        let grid = g3();
        let u = quad(&grid, &[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        let b1 = b_m_field(&u, 1).unwrap();
        let b2 = b_m_field(&u, 2).unwrap();
        assert_eq!(b1.valid_count(), 7usize.pow(3));
        assert!(b1.iter_valid().all(|(_, v)| (v - 3.0).abs() < 1e-12));
        assert!(b2.iter_valid().all(|(_, v)| (v - 2.5).abs() < 1e-12));
        assert!(b_m_field(&u, 0).is_err());
        let w = GridFunction::from_fn(grid.clone(), |x| (x[0] * x[1]).sin() + x[2].powi(3)).unwrap();
        let b3 = b_m_field(&w, 3).unwrap();
        for (i, v) in b3.iter_valid() {
            let j = jet(&w, i).unwrap();
            assert!((3.0 * v - j.hessian.trace()).abs() < 1e-10 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn sigma2_jacobi_constants() {
        let p = JacobiParams::for_sigma2(1.0, 0.1).unwrap();
        assert_eq!(p.alpha, 0.0625);
        assert_eq!(p.delta, 5.0);
        assert_eq!(p.eigengap_tol, 1.0);
        let p = JacobiParams::for_sigma2(0.25, 0.1).unwrap();
        assert_eq!(p.alpha, 0.25 / 16.0);
        assert_eq!(p.delta, 9.0);
        assert!(JacobiParams::for_sigma2(0.0, 0.1).is_err());
    }

    #[test]
    fn jacobi_vanishes_on_quadratics() {
        let grid = Grid::centered(3, 1.0, 11).unwrap();
        let u = quad(&grid, &[[8.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        let p = JacobiParams::for_sigma2(1.0, grid.spacing()).unwrap();
        let c = grid.node_at(&[0.0; 3]).unwrap();
        let o = jacobi_residual(&u, c, &p).unwrap();
        assert!(o.applicable);
        assert!(o.residual.abs() < 1e-10);
        let scan = jacobi_scan(&u, &p, 1e-9).unwrap();
        assert_eq!(scan.evaluated, 5usize.pow(3));
        assert_eq!(scan.applicable, scan.evaluated);
        assert_eq!(scan.violations, 0);
        let shallow = grid.index(&[2, 5, 5]).unwrap();
        assert!(jacobi_residual(&u, shallow, &p).is_err());
    }

    #[test]
    fn rescale_keeps_hessians_and_phase() {
        let grid = g3();
        let u = GridFunction::from_fn(grid.clone(), |x| 0.5 * x[0] * x[0] + (x[1] * x[2]).cos()).unwrap();
        let v = rescale(&u, 0.5).unwrap();
        assert_eq!(v.grid().half_width(), 2.0);
        let c = grid.node_at(&[0.0; 3]).unwrap();
        let (a, b) = (jet(&u, c).unwrap(), jet(&v, c).unwrap());
        assert_relative_eq!(phase(&a.spectrum), phase(&b.spectrum), epsilon = 1e-12);
    }
}
