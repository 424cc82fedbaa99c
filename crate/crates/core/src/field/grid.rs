use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 4;

/// Uniform axis-aligned box grid `center + [-L, L]^n` with an odd number of
/// points per axis, so the center is a node.
///
/// Nodes are stored row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    center: Vec<f64>,
    half_width: f64,
    points: usize,
}

impl Grid {
    pub fn new(center: Vec<f64>, half_width: f64, points_per_axis: usize) -> Result<Self> {
        let dim = center.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidArgument(format!("grid dimension must be 2..=4, got {dim}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("grid center {center:?}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!("half width must be positive, got {half_width}")));
        }
        if points_per_axis < 9 || points_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "points per axis must be odd and at least 9, got {points_per_axis}"
            )));
        }
        let total = (points_per_axis as u128).pow(dim as u32);
        if total > u32::MAX as u128 {
            return Err(Error::InvalidArgument(format!("grid with {total} nodes is too large")));
        }
        Ok(Grid { dim, center, half_width, points: points_per_axis })
    }

    /// Grid centered at the origin.
    pub fn centered(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        Grid::new(vec![0.0; dim], half_width, points_per_axis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    /// Spacing `Δx = 2L / (N - 1)`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    /// Total node count `N^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index offset of a unit step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    /// Per-axis integer coordinates of a node; entries past `dim` are zero.
    pub fn coords(&self, index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = index;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.points;
            rest /= self.points;
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: coords.len() });
        }
        let mut idx = 0;
        for &k in coords {
            if k >= self.points {
                return Err(Error::IndexOutOfRange { index: k, len: self.points });
            }
            idx = idx * self.points + k;
        }
        Ok(idx)
    }

    /// Physical coordinate of integer position `k` along `axis`.
    pub fn axis_coordinate(&self, axis: usize, k: usize) -> f64 {
        let offset = k as f64 - ((self.points - 1) / 2) as f64;
        self.center[axis] + offset * self.spacing()
    }

    /// Physical position of a node.
    pub fn position(&self, index: usize) -> Vec<f64> {
        let c = self.coords(index);
        (0..self.dim).map(|a| self.axis_coordinate(a, c[a])).collect()
    }

    /// Writes the node position into `out[..dim]`.
    pub fn position_into(&self, index: usize, out: &mut [f64]) {
        let c = self.coords(index);
        for a in 0..self.dim {
            out[a] = self.axis_coordinate(a, c[a]);
        }
    }

    /// Stencil depth: 1 + the number of nodes between this node and the nearest
    /// boundary face. Boundary nodes have depth 1.
    pub fn depth(&self, index: usize) -> usize {
        let c = self.coords(index);
        (0..self.dim).map(|a| c[a].min(self.points - 1 - c[a])).min().unwrap_or(0) + 1
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        self.depth(index) == 1
    }

    /// Boundary nodes in increasing index order.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_boundary(i)).collect()
    }

    /// Nodes of depth at least `depth`, in increasing index order.
    pub fn nodes_with_depth(&self, depth: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.depth(i) >= depth).collect()
    }

    /// Node sitting exactly at `point` (up to `1e-9 Δx`), if any.
    pub fn node_at(&self, point: &[f64]) -> Option<usize> {
        if point.len() != self.dim {
            return None;
        }
        let h = self.spacing();
        let half = ((self.points - 1) / 2) as f64;
        let mut idx = 0;
        for a in 0..self.dim {
            let t = (point[a] - self.center[a]) / h + half;
            let k = t.round();
            if (t - k).abs() > 1e-9 || k < 0.0 || k > (self.points - 1) as f64 {
                return None;
            }
            idx = idx * self.points + k as usize;
        }
        Some(idx)
    }

    /// Node nearest to `point`, clamped to the grid.
    pub fn nearest_node(&self, point: &[f64]) -> usize {
        let h = self.spacing();
        let half = ((self.points - 1) / 2) as f64;
        let mut idx = 0;
        for a in 0..self.dim {
            let t = ((point[a] - self.center[a]) / h + half).round();
            let k = t.clamp(0.0, (self.points - 1) as f64) as usize;
            idx = idx * self.points + k;
        }
        idx
    }

    /// Nodes `x` with `|x - y| ≤ r`, in increasing index order.
    pub fn nodes_in_ball(&self, y: &[f64], r: f64) -> Vec<usize> {
        let mut pos = [0.0; MAX_DIM];
        let r2 = r * r * (1.0 + 1e-12);
        (0..self.len())
            .filter(|&i| {
                self.position_into(i, &mut pos);
                dist2(&pos[..self.dim], y) <= r2
            })
            .collect()
    }

    /// Neighbour of `index` shifted by `step` (±1) along `axis`, if it stays on the grid.
    pub fn neighbor(&self, index: usize, axis: usize, step: isize) -> Option<usize> {
        let k = self.coords(index)[axis] as isize + step;
        if k < 0 || k >= self.points as isize {
            return None;
        }
        let s = self.stride(axis) as isize;
        Some((index as isize + step * s) as usize)
    }

    /// Euclidean distance between two nodes.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.coords(a), self.coords(b));
        let h = self.spacing();
        (0..self.dim).map(|i| ((ca[i] as f64 - cb[i] as f64) * h).powi(2)).sum::<f64>().sqrt()
    }

    /// True when both grids have identical layout.
    pub fn same_layout(&self, other: &Grid) -> bool {
        self == other
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
