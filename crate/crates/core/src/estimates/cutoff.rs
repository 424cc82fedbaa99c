use serde::{Deserialize, Serialize};

use super::ball::Ball;
use crate::error::{Error, Result};
use crate::field::{dist2, jet, GridFunction};

/// α values tried when searching for a working cutoff exponent.
pub const ALPHA_SWEEP: [f64; 6] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
pub const DEFAULT_CUTOFF_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub alpha: f64,
    /// The scale `h` in `e^{(S - φ)/h}`.
    pub cutoff_scale: f64,
    pub y: Vec<f64>,
}

impl CutoffParams {
    pub fn new(alpha: f64, cutoff_scale: f64, y: Vec<f64>) -> Result<Self> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("cutoff exponent alpha = {alpha} must be ≥ 1")));
        }
        if !(cutoff_scale > 0.0 && cutoff_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("cutoff scale must be positive, got {cutoff_scale}")));
        }
        Ok(Self { alpha, cutoff_scale, y })
    }
}

/// `α^{-1} 2^α / d^{2α}`.
pub fn radial_term(alpha: f64, d: f64) -> f64 {
    2f64.powf(alpha) / (alpha * d.powf(2.0 * alpha))
}

/// `α^{-1} 2^{3α}`, the radial term on the sphere of radius 1/2.
pub fn shell_constant(alpha: f64) -> f64 {
    2f64.powf(3.0 * alpha) / alpha
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffNode {
    pub node: usize,
    pub dist: f64,
    pub phi: f64,
    pub s_minus_phi: f64,
    pub eta: f64,
    pub on_shell: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KorevaarCutoff {
    pub params: CutoffParams,
    pub s: f64,
    /// `‖(x - y)·Du - u + u(y)‖_∞` over `B_{1/2}(y)`.
    pub linear_sup: f64,
    /// Nodes of `B_{1/2}(y) \ {y}` and of its outer shell.
    pub nodes: Vec<CutoffNode>,
    /// Largest `S - φ` on the shell; must be negative.
    pub shell_max: f64,
    /// Smallest `S - φ` on `B_{1/4}(y) \ {y}`; must be positive.
    pub inner_min: f64,
    pub sign_ok: bool,
}

/// Korevaar-type cutoff around the node `y`.
///
/// `S - φ` is evaluated as `(-1 - ‖ℓ‖ - ℓ(x)) + c (e^{-2α ln 2d} - 1)` with
/// `ℓ = (x - y)·Du - u + u(y)` and `c = α^{-1} 2^{3α}`, which equals the
/// definition exactly but keeps the O(1) part when `c` is huge.
pub fn korevaar_cutoff(u: &GridFunction, p: &CutoffParams) -> Result<KorevaarCutoff> {
    let g = u.grid();
    let yn = g
        .node_at(&p.y)
        .ok_or_else(|| Error::InvalidArgument(format!("cutoff center {:?} is not a grid node", p.y)))?;
    let half = Ball::new(p.y.clone(), 0.5)?;
    let inside = half.nodes(g)?;
    let shell = half.outer_shell(g);
    let uy = u.value(yn);
    let linear = |k: usize| -> Result<f64> {
        let x = g.position(k);
        let du = jet(u, k)?.gradient;
        Ok(x.iter().zip(&p.y).zip(&du).map(|((a, b), d)| (a - b) * d).sum::<f64>() - u.value(k) + uy)
    };
    let mut lin_in = Vec::with_capacity(inside.len());
    for &k in &inside {
        lin_in.push(if k == yn { 0.0 } else { linear(k)? });
    }
    let linear_sup = lin_in.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let c = shell_constant(p.alpha);
    let s = -1.0 - linear_sup - c;
    let quarter2 = 0.25 * 0.25 * (1.0 + 1e-12);
    let mut nodes = Vec::with_capacity(inside.len() + shell.len());
    let (mut shell_max, mut inner_min) = (f64::NEG_INFINITY, f64::INFINITY);
    let eval = |k: usize, l: f64, on_shell: bool| {
        let dist = dist2(&g.position(k), &p.y).sqrt();
        let s_minus_phi = (-1.0 - linear_sup - l) + c * (-2.0 * p.alpha * (2.0 * dist).ln()).exp_m1();
        CutoffNode {
            node: k,
            dist,
            phi: l - radial_term(p.alpha, dist),
            s_minus_phi,
            eta: (s_minus_phi / p.cutoff_scale).exp_m1().max(0.0),
            on_shell,
        }
    };
    for (&k, &l) in inside.iter().zip(&lin_in) {
        if k == yn {
            continue;
        }
        let on_shell = shell.contains(&k);
        let cn = eval(k, l, on_shell);
        if cn.dist * cn.dist <= quarter2 {
            inner_min = inner_min.min(cn.s_minus_phi);
        }
        nodes.push(cn);
    }
    for &k in &shell {
        if inside.binary_search(&k).is_ok() {
            continue;
        }
        nodes.push(eval(k, linear(k)?, true));
    }
    for cn in nodes.iter().filter(|cn| cn.on_shell) {
        shell_max = shell_max.max(cn.s_minus_phi);
    }
    Ok(KorevaarCutoff {
        params: p.clone(),
        s,
        linear_sup,
        nodes,
        shell_max,
        inner_min,
        sign_ok: shell_max < 0.0 && inner_min > 0.0,
    })
}

/// Smallest α of [`ALPHA_SWEEP`] with the sign property, if any.
pub fn smallest_sign_alpha(u: &GridFunction, y: &[f64], cutoff_scale: f64) -> Result<Option<f64>> {
    for alpha in ALPHA_SWEEP {
        if korevaar_cutoff(u, &CutoffParams::new(alpha, cutoff_scale, y.to_vec())?)?.sign_ok {
            return Ok(Some(alpha));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    fn quad() -> GridFunction {
        let g = Grid::centered(3, 2.0, 41).unwrap();
        GridFunction::from_fn(g, |x| 0.5 * (3.0 * x[0] * x[0] + x[1] * x[1] - 0.5 * x[2] * x[2])).unwrap()
    }

    #[test]
    fn shell_identity() {
        for alpha in ALPHA_SWEEP {
            assert_eq!(radial_term(alpha, 0.5), shell_constant(alpha));
        }
    }

    #[test]
    fn quadratic_sweep_finds_alpha() {
        let u = quad();
        for y in [[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]] {
            let a = smallest_sign_alpha(&u, &y, DEFAULT_CUTOFF_SCALE).unwrap();
            assert_eq!(a, Some(2.0));
            let k = korevaar_cutoff(&u, &CutoffParams::new(64.0, 0.1, y.to_vec()).unwrap()).unwrap();
            assert!(k.sign_ok, "{} {}", k.shell_max, k.inner_min);
        }
    }

    #[test]
    fn eta_is_positive_part() {
        let u = quad();
        let k = korevaar_cutoff(&u, &CutoffParams::new(2.0, 0.1, vec![0.0; 3]).unwrap()).unwrap();
        for cn in &k.nodes {
            if cn.s_minus_phi <= 0.0 {
                assert_eq!(cn.eta, 0.0);
            } else {
                assert!(cn.eta > 0.0);
            }
            assert!((k.s - cn.phi - cn.s_minus_phi).abs() <= 1e-9 * (1.0 + cn.phi.abs()));
        }
    }

    #[test]
    fn off_node_center_rejected() {
        let u = quad();
        assert!(korevaar_cutoff(&u, &CutoffParams::new(2.0, 0.1, vec![0.05, 0.0, 0.0]).unwrap()).is_err());
    }
}
