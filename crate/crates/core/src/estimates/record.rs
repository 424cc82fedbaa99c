use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Grid;

/// Column order of the estimate stream.
pub const RECORD_HEADER: [&str; 6] = ["instance", "quantity", "value", "r", "y", "grid"];

/// One measured quantity; `y` is written as space-separated coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub instance: String,
    pub quantity: String,
    pub value: f64,
    pub r: Option<f64>,
    #[serde(with = "coords")]
    pub y: Option<Vec<f64>>,
    pub grid: String,
}

mod coords {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(y: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match y {
            None => s.serialize_str(""),
            Some(v) => s.serialize_str(&v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        let s = String::deserialize(d)?;
        if s.trim().is_empty() {
            return Ok(None);
        }
        s.split_whitespace()
            .map(|t| t.parse::<f64>().map_err(serde::de::Error::custom))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

/// `n{dim}-N{points}-L{half_width}`.
pub fn grid_label(g: &Grid) -> String {
    format!("n{}-N{}-L{}", g.dim(), g.points_per_axis(), g.half_width())
}

impl EstimateRecord {
    pub fn new(instance: &str, quantity: &str, value: f64, grid: &Grid) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{instance}/{quantity} = {value}")));
        }
        Ok(Self { instance: instance.into(), quantity: quantity.into(), value, r: None, y: None, grid: grid_label(grid) })
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.r = Some(r);
        self
    }

    pub fn with_center(mut self, y: &[f64]) -> Self {
        self.y = Some(y.to_vec());
        self
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("estimate csv: {e}"))
}

/// Writes records, with the header line when `header` is set.
pub fn write_records_csv(w: impl Write, records: &[EstimateRecord], header: bool) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    if header {
        wr.write_record(RECORD_HEADER).map_err(csv_err)?;
    }
    for r in records {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_records_csv(r: impl Read) -> Result<Vec<EstimateRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(RECORD_HEADER) {
        return Err(Error::Format(format!("unexpected estimate header {headers:?}")));
    }
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g = Grid::centered(3, 2.0, 33).unwrap();
        let recs = vec![
            EstimateRecord::new("cone(n=3)-s1-k0", "gradient_ratio", 0.1 + 0.2, &g).unwrap().with_radius(1.0),
            EstimateRecord::new("x", "doubling_sup_r", -3.5e-17, &g).unwrap().with_radius(0.125).with_center(&[0.2, 0.0, -0.1]),
        ];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &recs, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("instance,quantity,value,r,y,grid\n"));
        assert_eq!(read_records_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn non_finite_rejected() {
        let g = Grid::centered(3, 2.0, 9).unwrap();
        assert!(EstimateRecord::new("a", "b", f64::NAN, &g).is_err());
    }
}
