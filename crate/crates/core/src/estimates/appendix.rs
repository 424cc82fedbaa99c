use serde::{Deserialize, Serialize};

use super::ball::{origin_node, oscillation, Ball};
use crate::error::{Error, Result};
use crate::field::{dist2, jet, GridFunction, MaskedField, Sampled};

/// The auxiliary function `w = (1 - |x|^2)|Du| + (n/M) u^2` on `B_1(0)`.
#[derive(Debug, Clone)]
pub struct AppendixW {
    /// `w` on the nodes of `B_1(0)`, excluded elsewhere.
    pub w: MaskedField,
    /// `osc_{B_1(0)} u`.
    pub m: f64,
    pub shifted: bool,
    pub argmax: usize,
    /// The maximizer lies on the inner shell of `B_1(0)`.
    pub argmax_on_shell: bool,
    pub gradient_at_origin: f64,
    pub w_origin: f64,
    pub w_max: f64,
}

/// Summary of the pointwise chain `|Du(0)| ≤ w(0) ≤ max w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixChain {
    pub gradient_at_origin: f64,
    pub w_origin: f64,
    pub w_max: f64,
    pub m: f64,
    pub argmax_on_shell: bool,
    pub chain_holds: bool,
    /// `|Du(0)| ≤ 4 n M`, only asserted when the maximizer is on the shell.
    pub boundary_bound_holds: bool,
}

impl AppendixW {
    pub fn chain(&self) -> AppendixChain {
        let n = self.w.grid().dim() as f64;
        AppendixChain {
            gradient_at_origin: self.gradient_at_origin,
            w_origin: self.w_origin,
            w_max: self.w_max,
            m: self.m,
            argmax_on_shell: self.argmax_on_shell,
            chain_holds: self.gradient_at_origin <= self.w_origin && self.w_origin <= self.w_max,
            boundary_bound_holds: !self.argmax_on_shell || self.gradient_at_origin <= 4.0 * n * self.m,
        }
    }
}

/// Builds `w`; with `shift_to_band` the function is first replaced by
/// `u - min u + M` so that `M ≤ u ≤ 2M` on `B_1(0)`.
pub fn appendix_test_function(u: &GridFunction, shift_to_band: bool) -> Result<AppendixW> {
    let g = u.grid();
    let n = g.dim();
    let ball = Ball::origin(n, 1.0)?;
    let nodes = ball.nodes(g)?;
    let m = oscillation(u, &ball)?;
    if m == 0.0 {
        return Err(Error::InvalidArgument("constant function on B_1(0): M = 0".into()));
    }
    let shifted_u;
    let v = if shift_to_band {
        let lo = nodes.iter().map(|&k| u.value(k)).fold(f64::INFINITY, f64::min);
        shifted_u = u.map(|_, x| x - lo + m)?;
        &shifted_u
    } else {
        u
    };
    let origin = vec![0.0; n];
    let mut values = vec![None; g.len()];
    for &k in &nodes {
        let grad = jet(v, k)?.gradient.iter().map(|d| d * d).sum::<f64>().sqrt();
        let eta = 1.0 - dist2(&g.position(k), &origin);
        values[k] = Some(eta.max(0.0) * grad + n as f64 / m * v.value(k).powi(2));
    }
    let w = MaskedField::new(g.clone(), values)?;
    let (argmax, w_max) = w
        .iter_valid()
        .fold((usize::MAX, f64::NEG_INFINITY), |best, (k, x)| if x > best.1 { (k, x) } else { best });
    let o = origin_node(g)?;
    let gradient_at_origin = jet(v, o)?.gradient.iter().map(|d| d * d).sum::<f64>().sqrt();
    let shell = ball.inner_shell(g)?;
    Ok(AppendixW {
        m,
        shifted: shift_to_band,
        argmax,
        argmax_on_shell: shell.contains(&argmax),
        gradient_at_origin,
        w_origin: w.sample_value(o),
        w_max,
        w,
    })
}
