use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::grid::{Grid, MAX_DIM};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SLEGRID1";

/// Read access to nodal values, possibly with excluded nodes.
pub trait Sampled: Sync {
    fn grid(&self) -> &Grid;
    /// Value at a node, `None` when the node is excluded.
    fn sample(&self, index: usize) -> Option<f64>;
}

/// Finite scalar values on every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value {} at node {i}", values[i])));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let values = vec![0.0; grid.len()];
        GridFunction { grid, values }
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut pos = [0.0; MAX_DIM];
        let values = (0..grid.len())
            .map(|i| {
                grid.position_into(i, &mut pos);
                f(&pos[..grid.dim()])
            })
            .collect();
        GridFunction::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Nodewise map preserving the grid.
    pub fn map(&self, f: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let mut pos = [0.0; MAX_DIM];
        let d = self.grid.dim();
        let values = (0..self.grid.len())
            .map(|i| {
                self.grid.position_into(i, &mut pos);
                f(&pos[..d], self.values[i])
            })
            .collect();
        GridFunction::new(self.grid.clone(), values)
    }

    /// Maximum absolute difference to another function on the same grid.
    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        if !self.grid.same_layout(&other.grid) {
            return Err(Error::InvalidArgument("grid layouts differ".into()));
        }
        Ok(self.values.iter().zip(&other.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Little-endian binary layout: magic `SLEGRID1`, `n` (u32), `L` (f64),
    /// points per axis (u64), `n` center coordinates (f64), then the values.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&self.grid.half_width().to_le_bytes())?;
        w.write_all(&(self.grid.points_per_axis() as u64).to_le_bytes())?;
        for c in self.grid.center() {
            w.write_all(&c.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::Format(format!("dimension {dim}")));
        }
        r.read_exact(&mut b8)?;
        let half_width = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let points = u64::from_le_bytes(b8) as usize;
        let mut center = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut b8)?;
            center.push(f64::from_le_bytes(b8));
        }
        let grid = Grid::new(center, half_width, points).map_err(|e| Error::Format(e.to_string()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * grid.len() {
            return Err(Error::Format(format!("expected {} value bytes, found {}", 8 * grid.len(), bytes.len())));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        GridFunction::new(grid, values).map_err(|e| Error::Format(e.to_string()))
    }

    /// CSV layout: a header row `n,half_width,points_per_axis,center_0,..`, its
    /// data row, a `value` row, then one value per line. Values are written in
    /// shortest round-trip form, so reading back is bit-exact.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let d = self.grid.dim();
        let centers: Vec<String> = (0..d).map(|a| format!("center_{a}")).collect();
        writeln!(w, "n,half_width,points_per_axis,{}", centers.join(","))?;
        let cvals: Vec<String> = self.grid.center().iter().map(|c| format!("{c:?}")).collect();
        writeln!(w, "{},{:?},{},{}", d, self.grid.half_width(), self.grid.points_per_axis(), cvals.join(","))?;
        writeln!(w, "value")?;
        for v in &self.values {
            writeln!(w, "{v:?}")?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines.next().ok_or_else(|| Error::Format(format!("missing {what}")))?.map_err(Error::from)
        };
        let header = next("header")?;
        if !header.starts_with("n,half_width,points_per_axis") {
            return Err(Error::Format(format!("unexpected header {header:?}")));
        }
        let meta = next("metadata row")?;
        let fields: Vec<&str> = meta.split(',').collect();
        let parse_f = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("{s:?}: {e}")));
        let parse_u = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Format(format!("{s:?}: {e}")));
        if fields.len() < 3 {
            return Err(Error::Format("short metadata row".into()));
        }
        let dim = parse_u(fields[0])?;
        if fields.len() != 3 + dim {
            return Err(Error::Format(format!("metadata row has {} fields for dimension {dim}", fields.len())));
        }
        let half_width = parse_f(fields[1])?;
        let points = parse_u(fields[2])?;
        let center = fields[3..].iter().map(|s| parse_f(s)).collect::<Result<Vec<_>>>()?;
        let grid = Grid::new(center, half_width, points).map_err(|e| Error::Format(e.to_string()))?;
        if next("value header")?.trim() != "value" {
            return Err(Error::Format("expected `value` header".into()));
        }
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            values.push(parse_f(&line)?);
        }
        GridFunction::new(grid, values).map_err(|e| Error::Format(e.to_string()))
    }
}

impl Sampled for GridFunction {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn sample(&self, index: usize) -> Option<f64> {
        Some(self.values[index])
    }
}

/// Nodal field where some nodes carry no value (near the boundary, or where
/// a derived quantity is undefined). Excluded nodes poison any stencil that
/// touches them.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedField {
    grid: Grid,
    values: Vec<Option<f64>>,
}

impl MaskedField {
    pub fn new(grid: Grid, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        let values = values.into_iter().map(|v| v.filter(|x| x.is_finite())).collect();
        Ok(MaskedField { grid, values })
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Iterator over `(index, value)` of the valid nodes.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter_map(|(i, v)| v.map(|x| (i, x)))
    }

    /// Value at a node, NaN when excluded.
    pub fn sample_value(&self, index: usize) -> f64 {
        self.values[index].unwrap_or(f64::NAN)
    }

    /// Largest absolute valid value, zero if none.
    pub fn max_abs(&self) -> f64 {
        self.iter_valid().fold(0.0_f64, |m, (_, v)| m.max(v.abs()))
    }
}

impl Sampled for MaskedField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn sample(&self, index: usize) -> Option<f64> {
        self.values[index]
    }
}
