use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::{solve_linear, solve_linear_rel, LinearStrategy, SparseMatrix};
use crate::error::{Error, Result};
use crate::field::{raw_jet, spectrum_and_metric_inverse, Grid, GridFunction, MaskedField};
use crate::spectral::{phase, satisfies_constraint, ConstraintSpec};

/// Generating data recorded alongside a problem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub id: String,
    /// Spectrum of the quadratic core, when the problem comes from one.
    pub generating_spectrum: Option<Vec<f64>>,
    pub amplitude: f64,
}

/// Dirichlet problem `Σ arctan λ_i(D^2u) = θ` on a grid, with boundary values
/// listed in [`Grid::boundary_nodes`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProblem {
    pub grid: Grid,
    pub theta: f64,
    pub boundary: Vec<f64>,
    pub constraint: Option<ConstraintSpec>,
    pub meta: ProblemMeta,
}

impl PhaseProblem {
    pub fn new(grid: Grid, theta: f64, boundary: Vec<f64>, constraint: Option<ConstraintSpec>) -> Result<Self> {
        let p = PhaseProblem { grid, theta, boundary, constraint, meta: ProblemMeta::default() };
        p.validate()?;
        Ok(p)
    }

    /// Boundary values sampled from `f`.
    pub fn from_boundary_fn(
        grid: Grid,
        theta: f64,
        constraint: Option<ConstraintSpec>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let boundary = grid.boundary_nodes().into_iter().map(|i| f(&grid.position(i))).collect();
        PhaseProblem::new(grid, theta, boundary, constraint)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.dim();
        if !(self.theta.abs() < n as f64 * FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!(
                "phase {} outside the attainable range |θ| < {}π/2",
                self.theta, n
            )));
        }
        let expected = self.grid.len() - (self.grid.points_per_axis() - 2).pow(n as u32);
        if self.boundary.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: self.boundary.len() });
        }
        if self.boundary.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("boundary value".into()));
        }
        if let Some(c) = &self.constraint {
            if c.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: c.dim() });
            }
        }
        Ok(())
    }

    /// Grid function with the boundary data and `interior` elsewhere.
    pub fn with_interior(&self, interior: f64) -> GridFunction {
        let mut values = vec![interior; self.grid.len()];
        for (k, i) in self.grid.boundary_nodes().into_iter().enumerate() {
            values[i] = self.boundary[k];
        }
        GridFunction::new(self.grid.clone(), values).expect("finite boundary data")
    }
}

/// Result of a Newton solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveOutcome {
    #[serde(skip)]
    pub u: GridFunction,
    /// Newton steps taken on the problem's own grid.
    pub iterations: usize,
    pub residual_norm: f64,
    pub constraint_violation_fraction: f64,
    pub converged: bool,
    pub tol: f64,
    /// Max-norm residual before each Newton step, then the final value.
    pub history: Vec<f64>,
    /// Newton steps spent on coarser grids to build the initial guess, coarsest first.
    pub coarse_iterations: Vec<usize>,
    /// Phases visited by the continuation, ending at the target.
    pub continuation: Vec<f64>,
    /// Why the solve stopped without converging.
    pub diagnostic: Option<String>,
}

/// Newton controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub linear: LinearStrategy,
    /// Upper bound on continuation stages.
    pub max_continuation: usize,
    /// Start from the solution on the half-resolution grid when one exists.
    pub nested: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 50, linear: LinearStrategy::Auto, max_continuation: 8, nested: true }
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

/// Interior numbering: nodes of depth ≥ 2 in index order.
pub(crate) struct Unknowns {
    pub nodes: Vec<usize>,
    pub slot: Vec<usize>,
}

impl Unknowns {
    pub fn new(grid: &Grid) -> Self {
        let nodes = grid.nodes_with_depth(2);
        let mut slot = vec![usize::MAX; grid.len()];
        for (k, &i) in nodes.iter().enumerate() {
            slot[i] = k;
        }
        Unknowns { nodes, slot }
    }
}

/// `phase(D^2u) - θ` at nodes of depth ≥ 2; other nodes are excluded.
pub fn sle_residual(u: &GridFunction, theta: f64) -> MaskedField {
    let grid = u.grid();
    let d = grid.dim();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if grid.depth(i) < 2 {
                return None;
            }
            let j = raw_jet(u, i)?;
            let (s, _) = spectrum_and_metric_inverse(&j.hess, d);
            Some(phase(&s) - theta)
        })
        .collect();
    MaskedField::new(grid.clone(), values).expect("matching length")
}

/// Residual row and Jacobian row at one interior node.
fn assemble_row(u: &GridFunction, node: usize, theta: f64, unknowns: &Unknowns) -> (f64, Vec<(usize, f64)>) {
    let grid = u.grid();
    let d = grid.dim();
    let h2 = grid.spacing().powi(2);
    let j = raw_jet(u, node).expect("interior node");
    let (s, g) = spectrum_and_metric_inverse(&j.hess, d);
    let mut row = Vec::with_capacity(1 + 2 * d * d);
    let mut push = |idx: usize, w: f64| {
        let k = unknowns.slot[idx];
        if k != usize::MAX {
            row.push((k, w));
        }
    };
    let mut center = 0.0;
    for i in 0..d {
        let si = grid.stride(i);
        let w = g[i][i] / h2;
        push(node + si, w);
        push(node - si, w);
        center -= 2.0 * w;
        for jj in 0..i {
            let sj = grid.stride(jj);
            // g^{ij} and g^{ji} share the cross stencil
            let w = 2.0 * g[i][jj] / (4.0 * h2);
            push(node + si + sj, w);
            push(node - si - sj, w);
            push(node + si - sj, -w);
            push(node - si + sj, -w);
        }
    }
    push(node, center);
    (phase(&s) - theta, row)
}

fn assemble(u: &GridFunction, theta: f64, unknowns: &Unknowns) -> (Vec<f64>, SparseMatrix) {
    let (res, rows): (Vec<f64>, Vec<Vec<(usize, f64)>>) =
        unknowns.nodes.par_iter().map(|&i| assemble_row(u, i, theta, unknowns)).unzip();
    (res, SparseMatrix::from_rows(rows))
}

/// Linearization `v ↦ Σ g^{ij}(u) D_ij v` on interior unknowns (nodes of
/// depth ≥ 2 in index order), with boundary values of `v` fixed at zero.
pub fn sle_linearization(u: &GridFunction) -> SparseMatrix {
    assemble(u, 0.0, &Unknowns::new(u.grid())).1
}

fn residual_max(u: &GridFunction, theta: f64, unknowns: &Unknowns) -> f64 {
    let d = u.grid().dim();
    unknowns
        .nodes
        .par_iter()
        .map(|&i| {
            let j = raw_jet(u, i).expect("interior node");
            (phase(&spectrum_and_metric_inverse(&j.hess, d).0) - theta).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Solution of the discrete Laplace equation with the problem's boundary data.
pub fn harmonic_extension(p: &PhaseProblem) -> Result<GridFunction> {
    p.validate()?;
    let start = p.with_interior(0.0);
    let unknowns = Unknowns::new(&p.grid);
    let a = sle_linearization(&GridFunction::zeros(p.grid.clone()));
    let d = p.grid.dim();
    let rhs: Vec<f64> = unknowns
        .nodes
        .iter()
        .map(|&i| {
            let j = raw_jet(&start, i).expect("interior node");
            -(0..d).map(|k| j.hess[k][k]).sum::<f64>()
        })
        .collect();
    let x = solve_linear(&a, &rhs, LinearStrategy::Auto)
        .map_err(|reason| Error::LinearSolve { iteration: 0, reason })?;
    let mut values = start.into_values();
    for (k, &i) in unknowns.nodes.iter().enumerate() {
        values[i] = x[k];
    }
    GridFunction::new(p.grid.clone(), values)
}

/// Fraction of depth-2 nodes whose Hessian spectrum violates the constraint.
pub fn constraint_violation_fraction(u: &GridFunction, spec: &ConstraintSpec) -> Result<f64> {
    let grid = u.grid();
    let d = grid.dim();
    if spec.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: spec.dim() });
    }
    let nodes = grid.nodes_with_depth(2);
    let bad = nodes
        .par_iter()
        .map(|&i| {
            let j = raw_jet(u, i).expect("interior node");
            let (s, _) = spectrum_and_metric_inverse(&j.hess, d);
            usize::from(!satisfies_constraint(&s, spec).unwrap_or(false))
        })
        .sum::<usize>();
    Ok(bad as f64 / nodes.len() as f64)
}

enum Stage {
    Converged,
    Stalled(String),
    OutOfIterations,
}

/// Mutable state of one solve.
struct Run<'a> {
    p: &'a PhaseProblem,
    opts: &'a NewtonOptions,
    unknowns: Unknowns,
    history: Vec<f64>,
    iterations: usize,
}

impl Run<'_> {
    /// Damped Newton at phase `theta` with at most `budget` steps.
    fn stage(&mut self, theta: f64, u: &mut GridFunction, budget: usize) -> Result<Stage> {
        let mut used = 0;
        loop {
            let (res, jac) = assemble(u, theta, &self.unknowns);
            let r = res.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            self.history.push(r);
            if r <= self.opts.tol {
                return Ok(Stage::Converged);
            }
            if used >= budget {
                return Ok(Stage::OutOfIterations);
            }
            let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
            // forcing term ~ r^2 keeps the local convergence quadratic
            let step = solve_linear_rel(&jac, &rhs, self.opts.linear, (r * r).min(1e-4))
                .map_err(|reason| Error::LinearSolve { iteration: self.iterations, reason })?;
            self.iterations += 1;
            used += 1;
            if !self.line_search(theta, u, &step, r)? {
                return Ok(Stage::Stalled(format!(
                    "line search stalled at iteration {} with residual {r:.3e}",
                    self.iterations
                )));
            }
        }
    }

    /// Backtracking on the max-norm residual; returns whether a step was taken.
    fn line_search(&self, theta: f64, u: &mut GridFunction, step: &[f64], r: f64) -> Result<bool> {
        let base = u.values();
        let mut t = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = base.to_vec();
            for (k, &i) in self.unknowns.nodes.iter().enumerate() {
                trial[i] += t * step[k];
            }
            if trial.iter().all(|v| v.is_finite()) {
                let cand = GridFunction::new(self.p.grid.clone(), trial)?;
                if residual_max(&cand, theta, &self.unknowns) <= (1.0 - ARMIJO * t) * r {
                    *u = cand;
                    return Ok(true);
                }
            }
            t *= 0.5;
        }
        Ok(false)
    }

    fn mean_phase(&self, u: &GridFunction) -> f64 {
        let d = u.grid().dim();
        let total: f64 = self
            .unknowns
            .nodes
            .iter()
            .map(|&i| phase(&spectrum_and_metric_inverse(&raw_jet(u, i).expect("interior").hess, d).0))
            .sum();
        total / self.unknowns.nodes.len() as f64
    }
}

/// Damped Newton with default options apart from `tol` and `max_iter`.
pub fn newton_solve(p: &PhaseProblem, init: Option<&GridFunction>, tol: f64, max_iter: usize) -> Result<SolveOutcome> {
    newton_solve_with(p, init, &NewtonOptions { tol, max_iter, ..NewtonOptions::default() })
}

/// The same problem on the grid with half the resolution, when that grid has
/// an odd point count of at least 9.
pub fn coarsen(p: &PhaseProblem) -> Option<PhaseProblem> {
    let nf = p.grid.points_per_axis();
    let nc = nf.div_ceil(2);
    if nc < 9 || nc.is_multiple_of(2) {
        return None;
    }
    let coarse = Grid::new(p.grid.center().to_vec(), p.grid.half_width(), nc).ok()?;
    let mut slot = vec![usize::MAX; p.grid.len()];
    for (k, i) in p.grid.boundary_nodes().into_iter().enumerate() {
        slot[i] = k;
    }
    let d = p.grid.dim();
    let boundary = coarse
        .boundary_nodes()
        .into_iter()
        .map(|i| {
            let c = coarse.coords(i);
            let fine: Vec<usize> = (0..d).map(|a| 2 * c[a]).collect();
            p.boundary[slot[p.grid.index(&fine).expect("in range")]]
        })
        .collect();
    Some(PhaseProblem { grid: coarse, theta: p.theta, boundary, constraint: p.constraint, meta: p.meta.clone() })
}

/// Damped Newton on the max-norm residual.
///
/// Without `init`, the start is the cubic prolongation of the solution on the
/// half-resolution grid (solved recursively) when `opts.nested` is set and
/// such a grid exists, and the harmonic extension of the boundary data
/// otherwise. If Newton does not converge from there, the phase is continued
/// from the mean phase of the start to the target in `max_continuation` stages.
pub fn newton_solve_with(p: &PhaseProblem, init: Option<&GridFunction>, opts: &NewtonOptions) -> Result<SolveOutcome> {
    p.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let mut coarse_iterations = Vec::new();
    let start = match init {
        Some(u0) => {
            if !u0.grid().same_layout(&p.grid) {
                return Err(Error::InvalidArgument("initial guess lives on a different grid".into()));
            }
            let mut values = u0.values().to_vec();
            for (k, i) in p.grid.boundary_nodes().into_iter().enumerate() {
                values[i] = p.boundary[k];
            }
            GridFunction::new(p.grid.clone(), values)?
        }
        None => match coarsen(p).filter(|_| opts.nested) {
            Some(cp) => {
                let c = newton_solve_with(&cp, None, opts)?;
                coarse_iterations = c.coarse_iterations.clone();
                coarse_iterations.push(c.iterations);
                if c.converged {
                    let mut values = prolongate(&c.u, &p.grid)?.into_values();
                    for (k, i) in p.grid.boundary_nodes().into_iter().enumerate() {
                        values[i] = p.boundary[k];
                    }
                    GridFunction::new(p.grid.clone(), values)?
                } else {
                    harmonic_extension(p)?
                }
            }
            None => harmonic_extension(p)?,
        },
    };
    let mut run = Run { p, opts, unknowns: Unknowns::new(&p.grid), history: Vec::new(), iterations: 0 };
    let mut u = start.clone();
    let mut continuation = vec![p.theta];
    let mut stage = run.stage(p.theta, &mut u, opts.max_iter)?;
    if !matches!(stage, Stage::Converged) && opts.max_continuation > 1 {
        let theta0 = run.mean_phase(&start);
        let k = opts.max_continuation;
        u = start;
        continuation.clear();
        for s in 1..=k {
            let theta = theta0 + (p.theta - theta0) * s as f64 / k as f64;
            continuation.push(theta);
            let left = opts.max_iter.saturating_sub(run.iterations);
            stage = run.stage(theta, &mut u, left)?;
            if !matches!(stage, Stage::Converged) {
                break;
            }
        }
    }
    let residual_norm = *run.history.last().expect("at least one evaluation");
    let constraint_violation_fraction = match &p.constraint {
        Some(c) => constraint_violation_fraction(&u, c)?,
        None => 0.0,
    };
    let (converged, diagnostic) = match stage {
        Stage::Converged => (true, None),
        Stage::Stalled(msg) => (false, Some(msg)),
        Stage::OutOfIterations => (false, Some(format!("no convergence within {} iterations", opts.max_iter))),
    };
    Ok(SolveOutcome {
        u,
        iterations: run.iterations,
        residual_norm,
        constraint_violation_fraction,
        converged,
        tol: opts.tol,
        history: run.history,
        coarse_iterations,
        continuation,
        diagnostic,
    })
}

/// Tensor-product cubic interpolation of `coarse` onto `fine`, which must
/// share its box and have `2k - 1` points per axis when `coarse` has `k`.
/// Cubic weights keep second differences accurate to `O(Δx^2)`.
pub fn prolongate(coarse: &GridFunction, fine: &Grid) -> Result<GridFunction> {
    let cg = coarse.grid();
    let nc = cg.points_per_axis();
    if fine.dim() != cg.dim()
        || fine.center() != cg.center()
        || fine.half_width() != cg.half_width()
        || fine.points_per_axis() != 2 * nc - 1
    {
        return Err(Error::InvalidArgument("fine grid must be the 2x refinement of the coarse grid".into()));
    }
    let d = fine.dim();
    let nf = fine.points_per_axis();
    // refine one axis at a time: shape goes from nc^d to nf^d
    let mut shape = vec![nc; d];
    let mut data = coarse.values().to_vec();
    for axis in 0..d {
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut next = vec![0.0; outer * nf * inner];
        for o in 0..outer {
            for r in 0..inner {
                let line: Vec<f64> = (0..nc).map(|k| data[(o * nc + k) * inner + r]).collect();
                for (k, v) in refine_line(&line).into_iter().enumerate() {
                    next[(o * nf + k) * inner + r] = v;
                }
            }
        }
        shape[axis] = nf;
        data = next;
    }
    GridFunction::new(fine.clone(), data)
}

fn refine_line(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut out = vec![0.0; 2 * n - 1];
    for k in 0..n {
        out[2 * k] = c[k];
    }
    for m in 0..n - 1 {
        out[2 * m + 1] = if m == 0 {
            (5.0 * c[0] + 15.0 * c[1] - 5.0 * c[2] + c[3]) / 16.0
        } else if m == n - 2 {
            (5.0 * c[n - 1] + 15.0 * c[n - 2] - 5.0 * c[n - 3] + c[n - 4]) / 16.0
        } else {
            (-c[m - 1] + 9.0 * c[m] + 9.0 * c[m + 1] - c[m + 2]) / 16.0
        };
    }
    out
}

/// Max-norm gap between the difference quotient `(F(u + t v) - F(u)) / t` of
/// the residual and the linearization applied to `v` (boundary values of `v`
/// are ignored).
pub fn directional_defect(u: &GridFunction, v: &GridFunction, t: f64) -> Result<f64> {
    if !u.grid().same_layout(v.grid()) {
        return Err(Error::InvalidArgument("u and v live on different grids".into()));
    }
    let unknowns = Unknowns::new(u.grid());
    let mut moved = u.values().to_vec();
    let mut vi = Vec::with_capacity(unknowns.nodes.len());
    for &i in &unknowns.nodes {
        moved[i] += t * v.value(i);
        vi.push(v.value(i));
    }
    let moved = GridFunction::new(u.grid().clone(), moved)?;
    let f0 = sle_residual(u, 0.0);
    let f1 = sle_residual(&moved, 0.0);
    let jv = sle_linearization(u).matvec(&vi);
    Ok(unknowns.nodes.iter().enumerate().fold(0.0_f64, |m, (k, &i)| {
        let q = (f1.sample_value(i) - f0.sample_value(i)) / t;
        m.max((q - jv[k]).abs())
    }))
}

/// Order `log(r_{k+1}/r_k) / log(r_k/r_{k-1})` from the last three residuals
/// that are all above `floor`.
pub fn observed_order(history: &[f64], floor: f64) -> Option<f64> {
    let kept: Vec<f64> = history.iter().copied().filter(|r| *r > floor).collect();
    if kept.len() < 3 {
        return None;
    }
    let w = &kept[kept.len() - 3..];
    Some((w[2] / w[1]).ln() / (w[1] / w[0]).ln())
}
