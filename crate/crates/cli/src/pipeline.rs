//! Family solves and the verification checks shared by `sweep`, `verify`
//! and the acceptance harness.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sle_lab::estimates::{
    appendix_test_function, doubling_check, doubling_fit, gradient_ratio, hessian_probe, smallest_sign_alpha,
    EstimateRecord, DEFAULT_CUTOFF_SCALE,
};
use sle_lab::field::{jacobi_scan, Grid, GridFunction, JacobiParams};
use sle_lab::measures::{
    default_bumps, dual_matrices, hessian_pairings, positivity_check, quadratic_approx_probe, t_a_from_pairings,
    weighted_lipschitz, DEFAULT_SUBSAMPLE,
};
use sle_lab::estimates::Ball;
use sle_lab::solver::{instance_family, newton_solve, FamilyConfig, InstanceSpec, SolveOutcome};
use sle_lab::spectral::ConstraintSpec;

use crate::config::{Check, RunConfig, Tolerances};
use crate::error::CliResult;

/// Lower bound accepted for `T_A(φ)` on admissible instances.
pub const QUADRATURE_TOL: f64 = 1e-6;
/// Jacobi threshold constant, calibrated from the 17³ → 33³ residual change
/// on the seed-1 families (largest observed 2.73e-3).
pub const JACOBI_K: f64 = 3e-3;
/// Cap on `|Du(0)| R / osc u`.
pub const GRADIENT_CAP: f64 = 1.0;
/// Parameter of the off-diagonal dual matrices.
pub const DUAL_T: f64 = 0.5;
pub const RECONSTRUCTION_TOL: f64 = 1e-12;

/// Per-instance solve data kept in reports and manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub id: String,
    pub amplitude: f64,
    pub theta: f64,
    pub iterations: usize,
    pub coarse_iterations: Vec<usize>,
    pub residual_norm: f64,
    pub constraint_violation_fraction: f64,
    pub converged: bool,
    pub diagnostic: Option<String>,
}

impl SolveSummary {
    pub fn new(spec: &InstanceSpec, o: &SolveOutcome) -> Self {
        Self {
            id: spec.id.clone(),
            amplitude: spec.amplitude,
            theta: spec.theta(),
            iterations: o.iterations,
            coarse_iterations: o.coarse_iterations.clone(),
            residual_norm: o.residual_norm,
            constraint_violation_fraction: o.constraint_violation_fraction,
            converged: o.converged,
            diagnostic: o.diagnostic.clone(),
        }
    }
}

/// A family member with its discrete solution.
#[derive(Debug, Clone)]
pub struct Solved {
    pub spec: InstanceSpec,
    pub u: GridFunction,
    pub summary: SolveSummary,
}

impl Solved {
    fn gated(&self, t: &Tolerances) -> bool {
        self.summary.converged && self.summary.constraint_violation_fraction <= t.violation_gate
    }
}

pub fn grid_of(cfg: &RunConfig) -> CliResult<Grid> {
    Ok(Grid::centered(cfg.problem.dimension, cfg.grid.half_width, cfg.grid.points)?)
}

pub fn family_config(cfg: &RunConfig) -> CliResult<FamilyConfig> {
    let mut f = FamilyConfig::new(cfg.family.seed, cfg.constraint()?, cfg.family.count);
    f.amplitudes = cfg.family.amplitudes.clone();
    Ok(f)
}

pub fn solve_one(spec: &InstanceSpec, grid: &Grid, t: &Tolerances) -> CliResult<Solved> {
    let o = newton_solve(&spec.problem(grid)?, None, t.newton, t.max_iter)?;
    let summary = SolveSummary::new(spec, &o);
    Ok(Solved { spec: spec.clone(), u: o.u, summary })
}

/// Solves every family member on the configured grid, in parallel.
pub fn solve_family(cfg: &RunConfig) -> CliResult<Vec<Solved>> {
    let grid = grid_of(cfg)?;
    let specs = instance_family(&family_config(cfg)?)?;
    specs.par_iter().map(|s| solve_one(s, &grid, &cfg.tolerances)).collect()
}

/// Result of one verification check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub passed: bool,
    pub metadata: BTreeMap<String, Value>,
    pub instances: Vec<Value>,
}

impl CheckReport {
    fn new() -> Self {
        Self { passed: true, metadata: BTreeMap::new(), instances: Vec::new() }
    }

    fn meta(&mut self, key: &str, v: Value) {
        self.metadata.insert(key.into(), v);
    }
}

fn gate_entry(s: &Solved) -> Value {
    json!({ "id": s.spec.id, "asserted": false, "constraint_violation_fraction": s.summary.constraint_violation_fraction })
}

fn record(s: &Solved, quantity: &str, value: f64) -> CliResult<EstimateRecord> {
    Ok(EstimateRecord::new(&s.spec.id, quantity, value, s.u.grid())?)
}

/// No applicable node below `-K Δx`.
pub fn check_jacobi(solved: &[Solved], constraint: &ConstraintSpec, t: &Tolerances, out: &mut Vec<EstimateRecord>) -> CliResult<CheckReport> {
    let mut rep = CheckReport::new();
    for s in solved {
        let dx = s.u.grid().spacing();
        let p = JacobiParams::for_constraint(constraint, dx)?;
        if rep.metadata.is_empty() {
            rep.meta("alpha", json!(p.alpha));
            rep.meta("delta", json!(p.delta));
            rep.meta("m", json!(p.m));
            rep.meta("eps", json!(p.eps));
            rep.meta("eigengap_tol", json!(p.eigengap_tol));
            rep.meta("k", json!(t.jacobi_k));
            rep.meta("tau", json!(t.jacobi_k * dx));
        }
        if !s.gated(t) {
            rep.instances.push(gate_entry(s));
            continue;
        }
        let scan = jacobi_scan(&s.u, &p, t.jacobi_k * dx)?;
        rep.passed &= scan.violations == 0;
        out.push(record(s, "jacobi_violation_fraction", scan.violation_fraction())?);
        out.push(record(s, "jacobi_worst_residual", scan.worst_residual)?);
        rep.instances.push(json!({
            "id": s.spec.id,
            "asserted": true,
            "evaluated": scan.evaluated,
            "applicable": scan.applicable,
            "violations": scan.violations,
            "anomalies": scan.anomalies,
            "worst_residual": scan.worst_residual,
        }));
    }
    Ok(rep)
}

/// `|Du(0)| ≤ w(0) ≤ max w`, and `|Du(0)| ≤ 4nM` when the maximizer is on the shell.
pub fn check_appendix(solved: &[Solved], t: &Tolerances, out: &mut Vec<EstimateRecord>) -> CliResult<CheckReport> {
    let mut rep = CheckReport::new();
    for s in solved {
        if !s.gated(t) {
            rep.instances.push(gate_entry(s));
            continue;
        }
        let c = appendix_test_function(&s.u, true)?.chain();
        rep.passed &= c.chain_holds && c.boundary_bound_holds;
        out.push(record(s, "appendix_w_max", c.w_max)?.with_radius(1.0));
        out.push(record(s, "appendix_gradient_at_origin", c.gradient_at_origin)?.with_radius(1.0));
        rep.instances.push(json!({ "id": s.spec.id, "asserted": true, "chain": c }));
    }
    Ok(rep)
}

/// Cutoff centers used by the sign check: the origin and `0.2 e_1`.
pub fn cutoff_centers(n: usize) -> Vec<Vec<f64>> {
    let mut y = vec![0.0; n];
    y[0] = 0.2;
    vec![vec![0.0; n], y]
}

/// Some α of the sweep gives the cutoff sign property at each center that is a node.
pub fn check_cutoff(solved: &[Solved], t: &Tolerances, out: &mut Vec<EstimateRecord>) -> CliResult<CheckReport> {
    let mut rep = CheckReport::new();
    rep.meta("alpha_sweep", json!(sle_lab::estimates::ALPHA_SWEEP));
    rep.meta("cutoff_scale", json!(DEFAULT_CUTOFF_SCALE));
    for s in solved {
        if !s.gated(t) {
            rep.instances.push(gate_entry(s));
            continue;
        }
        let mut centers = Vec::new();
        for y in cutoff_centers(s.u.grid().dim()) {
            if s.u.grid().node_at(&y).is_none() {
                centers.push(json!({ "y": y, "skipped": "not a grid node" }));
                continue;
            }
            let alpha = smallest_sign_alpha(&s.u, &y, DEFAULT_CUTOFF_SCALE)?;
            rep.passed &= alpha.is_some();
            if let Some(a) = alpha {
                out.push(record(s, "cutoff_smallest_alpha", a)?.with_radius(0.5).with_center(&y));
            }
            centers.push(json!({ "y": y, "smallest_alpha": alpha }));
        }
        rep.instances.push(json!({ "id": s.spec.id, "asserted": true, "centers": centers }));
    }
    Ok(rep)
}

/// Nested-ball monotonicity and the family fit of the doubling sups at `y = 0`.
pub fn check_doubling(solved: &[Solved], r: f64, t: &Tolerances, out: &mut Vec<EstimateRecord>) -> CliResult<CheckReport> {
    let mut rep = CheckReport::new();
    let mut recs = Vec::new();
    for s in solved {
        if !s.gated(t) {
            rep.instances.push(gate_entry(s));
            continue;
        }
        let y = vec![0.0; s.u.grid().dim()];
        let d = doubling_check(&s.u, &y, r)?;
        rep.passed &= d.sup_quarter >= d.sup_r;
        out.push(record(s, "doubling_sup_quarter", d.sup_quarter)?.with_radius(0.25).with_center(&y));
        out.push(record(s, "doubling_sup_r", d.sup_r)?.with_radius(r).with_center(&y));
        rep.instances.push(json!({ "id": s.spec.id, "asserted": true, "record": d }));
        recs.push(d);
    }
    rep.meta("r", json!(r));
    match doubling_fit(&recs) {
        Ok(fit) => {
            rep.passed &= fit.slope.is_finite() && fit.c_emp.is_finite();
            rep.meta("fit", json!(fit));
        }
        Err(e) => rep.meta("fit", json!({ "unavailable": e.to_string() })),
    }
    Ok(rep)
}

/// `|Du(0)| R / osc u ≤ cap` with `R = 1`.
pub fn check_gradient(solved: &[Solved], t: &Tolerances, out: &mut Vec<EstimateRecord>) -> CliResult<CheckReport> {
    let mut rep = CheckReport::new();
    rep.meta("cap", json!(t.gradient_cap));
    let mut worst: f64 = 0.0;
    for s in solved {
        if !s.gated(t) {
            rep.instances.push(gate_entry(s));
            continue;
        }
        let g = gradient_ratio(&s.u, 1.0)?;
        rep.passed &= !g.anomaly && g.ratio <= t.gradient_cap;
        worst = worst.max(g.ratio);
        if g.ratio.is_finite() {
            out.push(record(s, "gradient_ratio", g.ratio)?.with_radius(1.0));
        }
        rep.instances.push(json!({ "id": s.spec.id, "asserted": true, "ratio": g }));
    }
    rep.meta("max_ratio", json!(worst));
    Ok(rep)
}

/// `(1/2t)(T_{A_ij} - T_I) - P_ij`, relative to the size of the terms.
pub fn reconstruction_error(u: &GridFunction, bump: &sle_lab::measures::TestFunction, t: f64) -> CliResult<f64> {
    let n = u.grid().dim();
    let p = hessian_pairings(u, bump)?;
    let fam = dual_matrices(n, t)?;
    let identity = t_a_from_pairings(&p, &fam[n].1)?;
    let mut worst: f64 = 0.0;
    for (_, a) in fam.iter().skip(n + 1) {
        let (i, j) = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| i < j && a[(i, j)] != 0.0)
            .expect("off-diagonal dual matrix");
        let ta = t_a_from_pairings(&p, a)?;
        let lhs = (ta - identity) / (2.0 * t);
        let scale = (ta.abs() + identity.abs()) / (2.0 * t) + p.values[(i, j)].abs();
        if scale > 0.0 {
            worst = worst.max((lhs - p.values[(i, j)]).abs() / scale);
        }
    }
    Ok(worst)
}

/// Dual-family positivity per proof case, reconstruction identity, and the
/// recorded weighted Lipschitz and quadratic approximation probes.
pub fn check_measures(solved: &[Solved], constraint: &ConstraintSpec, t: &Tolerances, out: &mut Vec<EstimateRecord>) -> CliResult<CheckReport> {
    let mut rep = CheckReport::new();
    rep.meta("quadrature_tol", json!(t.quadrature));
    rep.meta("t", json!(DUAL_T));
    rep.meta("reconstruction_tol", json!(RECONSTRUCTION_TOL));
    for s in solved {
        if !s.gated(t) {
            rep.instances.push(gate_entry(s));
            continue;
        }
        let g = s.u.grid();
        let bumps = default_bumps(g.center())?;
        let pos = positivity_check(&s.u, constraint, &bumps, DUAL_T)?;
        let recon = reconstruction_error(&s.u, &bumps[0], DUAL_T)?;
        let ok = pos.passed(t.quadrature) && recon <= RECONSTRUCTION_TOL;
        rep.passed &= ok;
        let wl = weighted_lipschitz(&s.u, &Ball::origin(g.dim(), 1.0)?, DEFAULT_SUBSAMPLE)?;
        let origin = g.node_at(&vec![0.0; g.dim()]).ok_or_else(|| sle_lab::Error::InvalidArgument("origin is not a node".into()))?;
        let probe = quadratic_approx_probe(&s.u, origin, &[0.5, 0.25, 0.125])?;
        out.push(record(s, "positivity_min_t_a", pos.min_value())?);
        out.push(record(s, "weighted_lipschitz_ratio", wl.ratio())?.with_radius(1.0));
        for p in &probe {
            out.push(record(s, "quadratic_approx_quotient", p.quotient)?.with_radius(p.r));
        }
        rep.instances.push(json!({
            "id": s.spec.id,
            "asserted": true,
            "case": pos.case,
            "min_t_a": pos.min_value(),
            "two_convexity_failures": pos.two_convexity_failures,
            "max_discrepancy": pos.entries.iter().map(|e| e.discrepancy).fold(0.0, f64::max),
            "reconstruction_error": recon,
            "weighted_lipschitz": wl,
            "quadratic_approx": probe,
        }));
    }
    Ok(rep)
}

/// Recorded `|D^2u(0)|` against `‖u‖_{C^{0,1}(B_1)}` and θ.
pub fn check_hessian(solved: &[Solved], out: &mut Vec<EstimateRecord>) -> CliResult<CheckReport> {
    let mut rep = CheckReport::new();
    let mut worst: f64 = 0.0;
    for s in solved {
        let h = hessian_probe(&s.u, s.summary.theta, DEFAULT_SUBSAMPLE)?;
        worst = worst.max(h.hessian_norm_at_0);
        out.push(record(s, "hessian_norm_at_0", h.hessian_norm_at_0)?);
        out.push(record(s, "c01_norm", h.lipschitz.c01())?.with_radius(1.0));
        rep.instances.push(json!({ "id": s.spec.id, "asserted": false, "probe": h }));
    }
    rep.meta("max_hessian_norm_at_0", json!(worst));
    Ok(rep)
}

/// Runs the selected checks in a fixed order.
pub fn run_checks(
    solved: &[Solved],
    cfg: &RunConfig,
    checks: &[Check],
    out: &mut Vec<EstimateRecord>,
) -> CliResult<BTreeMap<String, CheckReport>> {
    let constraint = cfg.constraint()?;
    let t = &cfg.tolerances;
    let mut selected = checks.to_vec();
    selected.sort();
    selected.dedup();
    let mut reports = BTreeMap::new();
    for c in selected {
        let rep = match c {
            Check::Jacobi => check_jacobi(solved, &constraint, t, out)?,
            Check::Appendix => check_appendix(solved, t, out)?,
            Check::Cutoff => check_cutoff(solved, t, out)?,
            Check::Doubling => check_doubling(solved, cfg.verify.r, t, out)?,
            Check::Gradient => check_gradient(solved, t, out)?,
            Check::Measures => check_measures(solved, &constraint, t, out)?,
            Check::Hessian => check_hessian(solved, out)?,
        };
        reports.insert(c.id().to_string(), rep);
    }
    Ok(reports)
}
