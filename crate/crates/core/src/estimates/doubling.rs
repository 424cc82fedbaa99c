use serde::{Deserialize, Serialize};

use super::ball::{origin_node, Ball};
use crate::error::{Error, Result};
use crate::field::{jet, GridFunction};
use crate::measures::{lipschitz_norm, LipschitzNorm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingRecord {
    pub y: Vec<f64>,
    pub r: f64,
    /// `sup λ_max(D^2u)` over `B_{1/4}(y)`.
    pub sup_quarter: f64,
    /// `sup λ_max(D^2u)` over `B_r(y)`.
    pub sup_r: f64,
    pub quarter_nodes: usize,
    pub r_nodes: usize,
}

fn sup_lambda_max(u: &GridFunction, b: &Ball) -> Result<(f64, usize)> {
    let nodes = b.nodes(u.grid())?;
    let mut sup = f64::NEG_INFINITY;
    for &k in &nodes {
        sup = sup.max(jet(u, k)?.spectrum.max());
    }
    Ok((sup, nodes.len()))
}

/// Largest Hessian eigenvalue over `B_{1/4}(y)` and over `B_r(y)`.
pub fn doubling_check(u: &GridFunction, y: &[f64], r: f64) -> Result<DoublingRecord> {
    let norm = y.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm > 0.5 + 1e-12 {
        return Err(Error::InvalidArgument(format!("doubling center {y:?} outside B_1/2(0)")));
    }
    if !(r > 0.0 && r <= 0.25) {
        return Err(Error::InvalidArgument(format!("doubling radius r = {r} outside (0, 1/4]")));
    }
    let (sup_quarter, quarter_nodes) = sup_lambda_max(u, &Ball::new(y.to_vec(), 0.25)?)?;
    let (sup_r, r_nodes) = sup_lambda_max(u, &Ball::new(y.to_vec(), r)?)?;
    Ok(DoublingRecord { y: y.to_vec(), r, sup_quarter, sup_r, quarter_nodes, r_nodes })
}

/// Least-squares line `sup_quarter ≈ slope · sup_r + intercept` over a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingFit {
    pub slope: f64,
    pub intercept: f64,
    /// `max (sup_quarter - intercept) / sup_r` over records with `sup_r > 0`.
    pub c_emp: f64,
    pub count: usize,
}

pub fn doubling_fit(records: &[DoublingRecord]) -> Result<DoublingFit> {
    let m = records.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("doubling fit needs at least 2 records, got {m}")));
    }
    let mean_x = records.iter().map(|r| r.sup_r).sum::<f64>() / m as f64;
    let mean_y = records.iter().map(|r| r.sup_quarter).sum::<f64>() / m as f64;
    let sxx: f64 = records.iter().map(|r| (r.sup_r - mean_x).powi(2)).sum();
    let sxy: f64 = records.iter().map(|r| (r.sup_r - mean_x) * (r.sup_quarter - mean_y)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("doubling fit needs distinct sup_r values".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let c_emp = records
        .iter()
        .filter(|r| r.sup_r > 0.0)
        .map(|r| (r.sup_quarter - intercept) / r.sup_r)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DoublingFit { slope, intercept, c_emp, count: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianProbe {
    /// Frobenius norm of the Hessian at the origin.
    pub hessian_norm_at_0: f64,
    pub lipschitz: LipschitzNorm,
    pub theta: f64,
}

/// `|D^2u(0)|` against the discrete `C^{0,1}(B_1(0))` norm and the phase.
pub fn hessian_probe(u: &GridFunction, theta: f64, subsample: usize) -> Result<HessianProbe> {
    let g = u.grid();
    let h = jet(u, origin_node(g)?)?.hessian;
    let lipschitz = lipschitz_norm(u, &Ball::origin(g.dim(), 1.0)?, subsample)?;
    Ok(HessianProbe { hessian_norm_at_0: h.norm(), lipschitz, theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use approx::assert_relative_eq;

    fn diag(a: [f64; 3]) -> GridFunction {
        let g = Grid::centered(3, 2.0, 33).unwrap();
        GridFunction::from_fn(g, move |x| 0.5 * (a[0] * x[0] * x[0] + a[1] * x[1] * x[1] + a[2] * x[2] * x[2])).unwrap()
    }

    #[test]
    fn quadratic_sups_agree() {
        let u = diag([2.0, 0.5, -1.0]);
        let d = doubling_check(&u, &[0.0; 3], 0.125).unwrap();
        assert_relative_eq!(d.sup_quarter, 2.0, max_relative = 1e-10);
        assert_relative_eq!(d.sup_r, 2.0, max_relative = 1e-10);
        assert!(d.quarter_nodes > d.r_nodes);
    }

    #[test]
    fn preconditions() {
        let u = diag([1.0; 3]);
        assert!(doubling_check(&u, &[0.6, 0.0, 0.0], 0.1).is_err());
        assert!(doubling_check(&u, &[0.0; 3], 0.3).is_err());
        assert!(doubling_check(&u, &[0.05, 0.05, 0.05], 0.01).is_err());
    }

    #[test]
    fn fit_recovers_line() {
        let recs: Vec<DoublingRecord> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&x| DoublingRecord { y: vec![0.0; 3], r: 0.125, sup_quarter: 3.0 * x + 0.5, sup_r: x, quarter_nodes: 1, r_nodes: 1 })
            .collect();
        let f = doubling_fit(&recs).unwrap();
        assert_relative_eq!(f.slope, 3.0, max_relative = 1e-12);
        assert_relative_eq!(f.intercept, 0.5, epsilon = 1e-12);
        assert_relative_eq!(f.c_emp, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn probe_identity_hessian() {
        let p = hessian_probe(&diag([1.0; 3]), 0.0, 10_000).unwrap();
        assert_relative_eq!(p.hessian_norm_at_0, 3f64.sqrt(), max_relative = 1e-12);
    }
}
