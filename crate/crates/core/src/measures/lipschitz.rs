use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::Ball;
use crate::field::GridFunction;

/// Above this many nodes the pair set is subsampled.
pub const EXHAUSTIVE_LIMIT: usize = 2000;
pub const DEFAULT_SUBSAMPLE: usize = 200_000;
const PAIR_SEED: u64 = 0x5eed_1a95;

/// Discrete `C^{0,1}` data of `u` on a ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzNorm {
    pub lipschitz: f64,
    pub sup_abs: f64,
    pub pairs: usize,
    pub exhaustive: bool,
}

impl LipschitzNorm {
    /// `sup|u| + Lip(u)`.
    pub fn c01(&self) -> f64 {
        self.sup_abs + self.lipschitz
    }
}

/// Weighted Lipschitz quotient against the `L^1` mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedLipschitz {
    pub lhs: f64,
    pub rhs_integral: f64,
    pub pairs: usize,
}

impl WeightedLipschitz {
    pub fn ratio(&self) -> f64 {
        if self.rhs_integral > 0.0 {
            self.lhs / self.rhs_integral
        } else {
            0.0
        }
    }
}

/// Node pairs used by the Lipschitz sups: all pairs for small balls, otherwise
/// every axis-neighbour pair plus `subsample` seeded random pairs.
pub fn lipschitz_pairs(u: &GridFunction, nodes: &[usize], subsample: usize) -> (Vec<(usize, usize)>, bool) {
    let m = nodes.len();
    if m <= EXHAUSTIVE_LIMIT {
        let pairs = (0..m).flat_map(|a| (a + 1..m).map(move |b| (nodes[a], nodes[b]))).collect();
        return (pairs, true);
    }
    let g = u.grid();
    let member: std::collections::HashSet<usize> = nodes.iter().copied().collect();
    let mut pairs = Vec::with_capacity(m * g.dim() + subsample);
    for &k in nodes {
        for axis in 0..g.dim() {
            if let Some(nb) = g.neighbor(k, axis, 1) {
                if member.contains(&nb) {
                    pairs.push((k, nb));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
    for _ in 0..subsample {
        let a = rng.random_range(0..m);
        let mut b = rng.random_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        pairs.push((nodes[a], nodes[b]));
    }
    (pairs, false)
}

fn ball_nodes(u: &GridFunction, b: &Ball) -> Result<Vec<usize>> {
    let nodes = b.nodes(u.grid())?;
    if nodes.len() < 2 {
        return Err(Error::EmptyBall { center: b.center().to_vec(), radius: b.radius(), found: nodes.len(), required: 2 });
    }
    Ok(nodes)
}

/// `max |u(x) - u(y)| / |x - y|` over the pair set, and `sup |u|` over the ball.
pub fn lipschitz_norm(u: &GridFunction, b: &Ball, subsample: usize) -> Result<LipschitzNorm> {
    let nodes = ball_nodes(u, b)?;
    let (pairs, exhaustive) = lipschitz_pairs(u, &nodes, subsample);
    let g = u.grid();
    let lipschitz = pairs
        .par_iter()
        .map(|&(a, c)| (u.value(a) - u.value(c)).abs() / g.distance(a, c))
        .reduce(|| 0.0, f64::max);
    let sup_abs = nodes.iter().map(|&k| u.value(k).abs()).fold(0.0, f64::max);
    Ok(LipschitzNorm { lipschitz, sup_abs, pairs: pairs.len(), exhaustive })
}

/// `sup d_{x,y}^{n+1} |u(x) - u(y)| / |x - y|` with `d = min(d_x, d_y)` the
/// distance to the sphere, and the node quadrature of `∫_B |u|`.
pub fn weighted_lipschitz(u: &GridFunction, b: &Ball, subsample: usize) -> Result<WeightedLipschitz> {
    let nodes = ball_nodes(u, b)?;
    let (pairs, _) = lipschitz_pairs(u, &nodes, subsample);
    let g = u.grid();
    let n = g.dim() as i32;
    let dist_to_sphere = |k: usize| (b.radius() - crate::field::dist2(&g.position(k), b.center()).sqrt()).max(0.0);
    let lhs = pairs
        .par_iter()
        .map(|&(a, c)| {
            let d = dist_to_sphere(a).min(dist_to_sphere(c));
            d.powi(n + 1) * (u.value(a) - u.value(c)).abs() / g.distance(a, c)
        })
        .reduce(|| 0.0, f64::max);
    let rhs_integral = nodes.iter().map(|&k| u.value(k).abs()).sum::<f64>() * g.spacing().powi(n);
    Ok(WeightedLipschitz { lhs, rhs_integral, pairs: pairs.len() })
}
