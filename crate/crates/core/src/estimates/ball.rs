use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dist2, jet, Grid, GridFunction};

/// Closed discrete ball `{x : |x - y| ≤ r}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("ball center".into()));
        }
        Ok(Self { center, radius })
    }

    /// Ball around the origin.
    pub fn origin(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], radius)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Grid nodes in the ball; an empty ball is an error.
    pub fn nodes(&self, grid: &Grid) -> Result<Vec<usize>> {
        if self.center.len() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), got: self.center.len() });
        }
        let nodes = grid.nodes_in_ball(&self.center, self.radius);
        if nodes.is_empty() {
            return Err(Error::EmptyBall { center: self.center.clone(), radius: self.radius, found: 0, required: 1 });
        }
        Ok(nodes)
    }

    /// Nodes of the ball with an axis neighbour outside it.
    pub fn inner_shell(&self, grid: &Grid) -> Result<Vec<usize>> {
        let nodes = self.nodes(grid)?;
        let r2 = self.radius * self.radius * (1.0 + 1e-12);
        let outside = |k: usize| dist2(&grid.position(k), &self.center) > r2;
        Ok(nodes
            .into_iter()
            .filter(|&k| {
                (0..grid.dim()).any(|a| [-1, 1].iter().any(|&s| grid.neighbor(k, a, s).is_none_or(outside)))
            })
            .collect())
    }

    /// Discrete sphere from outside: nodes with `|x - y| ≥ r` having an axis
    /// neighbour strictly inside, together with nodes at distance exactly `r`.
    pub fn outer_shell(&self, grid: &Grid) -> Vec<usize> {
        let r = self.radius;
        let dist = |k: usize| dist2(&grid.position(k), &self.center).sqrt();
        (0..grid.len())
            .filter(|&k| {
                let d = dist(k);
                if (d - r).abs() <= 1e-12 * r.max(1.0) {
                    return true;
                }
                d > r
                    && (0..grid.dim()).any(|a| {
                        [-1, 1].iter().any(|&s| grid.neighbor(k, a, s).is_some_and(|nb| dist(nb) < r))
                    })
            })
            .collect()
    }
}

/// `max - min` of `u` over the nodes of the ball.
pub fn oscillation(u: &GridFunction, b: &Ball) -> Result<f64> {
    let nodes = b.nodes(u.grid())?;
    let (lo, hi) = nodes
        .iter()
        .map(|&k| u.value(k))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

/// `|Du(0)| R / osc_{B_R(0)} u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientRatio {
    pub gradient_norm: f64,
    pub oscillation: f64,
    pub radius: f64,
    /// 0 when both gradient and oscillation vanish; infinite when flagged.
    pub ratio: f64,
    /// Zero oscillation with a nonzero gradient.
    pub anomaly: bool,
}

pub(crate) fn origin_node(grid: &Grid) -> Result<usize> {
    let zero = vec![0.0; grid.dim()];
    grid.node_at(&zero).ok_or_else(|| Error::InvalidArgument("the origin is not a grid node".into()))
}

/// Empirical constant of the interior gradient estimate.
pub fn gradient_ratio(u: &GridFunction, radius: f64) -> Result<GradientRatio> {
    let g = u.grid();
    let o = origin_node(g)?;
    let gradient_norm = jet(u, o)?.gradient.iter().map(|d| d * d).sum::<f64>().sqrt();
    let oscillation = oscillation(u, &Ball::origin(g.dim(), radius)?)?;
    let (ratio, anomaly) = if oscillation > 0.0 {
        (gradient_norm * radius / oscillation, false)
    } else if gradient_norm == 0.0 {
        (0.0, false)
    } else {
        (f64::INFINITY, true)
    };
    Ok(GradientRatio { gradient_norm, oscillation, radius, ratio, anomaly })
}
