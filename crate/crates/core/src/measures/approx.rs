use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{jet, GridFunction};

/// One radius of the quadratic approximation probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxPoint {
    pub r: f64,
    pub sup_error: f64,
    /// `sup_error / r^2`.
    pub quotient: f64,
    pub nodes: usize,
}

/// `sup_{B_r(x)} |u - Q| / r^2` for the Taylor polynomial `Q` of the jet at `node`.
/// Radii below `2Δx` are dropped.
pub fn quadratic_approx_probe(u: &GridFunction, node: usize, radii: &[f64]) -> Result<Vec<ApproxPoint>> {
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("radii must be strictly decreasing".into()));
    }
    let g = u.grid();
    let j = jet(u, node)?;
    let x0 = g.position(node);
    let n = g.dim();
    if let Some(&r) = radii.first() {
        let fits = (0..n).all(|i| (x0[i] - g.center()[i]).abs() + r <= g.half_width() + 1e-12);
        if !fits {
            return Err(Error::InvalidArgument(format!("B_{r} around node {node} leaves the grid")));
        }
    }
    let u0 = u.value(node);
    let taylor = |y: &[f64]| {
        let d: Vec<f64> = (0..n).map(|i| y[i] - x0[i]).collect();
        let mut q = u0;
        for i in 0..n {
            q += j.gradient[i] * d[i];
            for k in 0..n {
                q += 0.5 * j.hessian[(i, k)] * d[i] * d[k];
            }
        }
        q
    };
    let mut out = Vec::new();
    for &r in radii {
        if !(r > 0.0) || r < 2.0 * g.spacing() {
            continue;
        }
        let nodes = g.nodes_in_ball(&x0, r);
        let sup_error = nodes.iter().map(|&k| (u.value(k) - taylor(&g.position(k))).abs()).fold(0.0, f64::max);
        out.push(ApproxPoint { r, sup_error, quotient: sup_error / (r * r), nodes: nodes.len() });
    }
    Ok(out)
}
