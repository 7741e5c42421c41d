use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Stacked node positions `x = (x_1, ..., x_n)`, each block of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Positions {
    dim: usize,
    coords: Vec<f64>,
}

impl Positions {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Positions { dim, coords: vec![0.0; n * dim] }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates cannot be split into blocks of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Positions { dim, coords })
    }

    /// Builds positions from per-node rows; every row must have length `dim`.
    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "position {i} has dimension {}, expected {dim}",
                    row.len()
                )));
            }
            coords.extend_from_slice(row);
        }
        Ok(Positions { dim, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> Point {
        Point::from(self.node(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn norm(&self) -> f64 {
        crate::geometry::norm(&self.coords)
    }

    pub fn distance(&self, other: &Positions) -> f64 {
        crate::geometry::distance(&self.coords, &other.coords)
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    pub(crate) fn check_shape(&self, n: usize, dim: usize) -> Result<()> {
        if self.dim != dim || self.len() != n {
            return Err(Error::InvalidArgument(format!(
                "positions have shape {}x{}, expected {n}x{dim}",
                self.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

impl Serialize for Positions {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.rows())
    }
}

#[cfg(feature = "schema")]
impl schemars::JsonSchema for Positions {
    fn schema_name() -> std::borrow::Cow<'static, str> {
        "Positions".into()
    }

    fn json_schema(generator: &mut schemars::SchemaGenerator) -> schemars::Schema {
        <Vec<Vec<f64>>>::json_schema(generator)
    }
}

impl<'de> Deserialize<'de> for Positions {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(serde::de::Error::custom("positions must be a nonempty list of nonempty rows"));
        }
        Positions::from_rows(dim, &rows).map_err(serde::de::Error::custom)
    }
}
