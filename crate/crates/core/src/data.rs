//! Dataset model: point records with features, a response and a planar
//! coordinate, plus CSV ingestion and seeded randomness.
//!
//! Coordinates are planar (projected, meters). Every spatial distance in the
//! crate goes through [`spatial_distance`] so that index queries and
//! brute-force checks agree bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Euclidean distance between two planar coordinates.
#[inline]
pub fn spatial_distance(a: Coord, b: Coord) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Seed for every stochastic operation. Sub-streams are derived with
/// [`RngSeed::derive`] so that per-fold or per-pair randomness does not depend
/// on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent child seed for stream `stream` (splitmix64 finalizer).
    pub fn derive(self, stream: u64) -> RngSeed {
        let mut z = self
            .0
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1)));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    /// Position in the owning dataset, `0..len`.
    pub id: usize,
    /// Id in the dataset this one was derived from (equal to `id` for
    /// datasets loaded from disk).
    pub source_id: usize,
    pub coord: Coord,
    pub features: Vec<f64>,
    /// Real value, or a non-negative integer class label for categorical
    /// datasets.
    pub response: f64,
}

impl PointRecord {
    pub fn label(&self) -> u32 {
        self.response as u32
    }
}

/// Immutable collection of point records. All transforms return new values.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoDataset {
    records: Vec<PointRecord>,
    feature_names: Vec<String>,
    response_kind: ResponseKind,
    crs_note: String,
}

/// One input row: coordinate, feature vector and response.
pub type RawRecord = (Coord, Vec<f64>, f64);

impl GeoDataset {
    /// Builds a dataset, assigning ids in row order.
    pub fn new(
        feature_names: Vec<String>,
        response_kind: ResponseKind,
        rows: Vec<RawRecord>,
    ) -> Result<Self> {
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(id, (coord, features, response))| PointRecord {
                id,
                source_id: id,
                coord,
                features,
                response,
            })
            .collect();
        Self::from_records(records, feature_names, response_kind, String::from("planar meters"))
    }

    fn from_records(
        records: Vec<PointRecord>,
        feature_names: Vec<String>,
        response_kind: ResponseKind,
        crs_note: String,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("dataset has no records".into()));
        }
        let n = feature_names.len();
        for r in &records {
            if r.features.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: r.features.len() });
            }
            if !r.coord.x.is_finite() || !r.coord.y.is_finite() {
                return Err(Error::InvalidArgument(format!("record {} has a non-finite coordinate", r.id)));
            }
            if r.features.iter().any(|v| !v.is_finite()) || !r.response.is_finite() {
                return Err(Error::InvalidArgument(format!("record {} has a non-finite value", r.id)));
            }
            if response_kind == ResponseKind::Categorical
                && (r.response < 0.0 || r.response.fract() != 0.0 || r.response > u32::MAX as f64)
            {
                return Err(Error::InvalidArgument(format!(
                    "record {}: categorical response {} is not a non-negative integer label",
                    r.id, r.response
                )));
            }
        }
        Ok(Self { records, feature_names, response_kind, crs_note })
    }

    pub fn with_crs_note(mut self, note: impl Into<String>) -> Self {
        self.crs_note = note.into();
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PointRecord] {
        &self.records
    }

    pub fn record(&self, id: usize) -> &PointRecord {
        &self.records[id]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn response_kind(&self) -> ResponseKind {
        self.response_kind
    }

    pub fn crs_note(&self) -> &str {
        &self.crs_note
    }

    pub fn coords(&self) -> Vec<Coord> {
        self.records.iter().map(|r| r.coord).collect()
    }

    pub fn responses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.response).collect()
    }

    /// New dataset holding the given records (in the given order) with
    /// contiguous ids; `source_id` keeps pointing at the original rows.
    pub fn subset(&self, ids: &[usize]) -> Result<GeoDataset> {
        let records = ids
            .iter()
            .enumerate()
            .map(|(new_id, &old)| {
                let r = &self.records[old];
                PointRecord { id: new_id, ..r.clone() }
            })
            .collect();
        Self::from_records(
            records,
            self.feature_names.clone(),
            self.response_kind,
            self.crs_note.clone(),
        )
    }

    /// Same records with the responses replaced.
    pub fn with_responses(&self, responses: &[f64]) -> Result<GeoDataset> {
        if responses.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: responses.len() });
        }
        let records = self
            .records
            .iter()
            .zip(responses)
            .map(|(r, &y)| PointRecord { response: y, ..r.clone() })
            .collect();
        Self::from_records(records, self.feature_names.clone(), self.response_kind, self.crs_note.clone())
    }
}

/// Column names used to read and write point tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnSchema {
    pub east: String,
    pub north: String,
    pub response: String,
    /// `None` means every column that is not a coordinate or the response.
    pub features: Option<Vec<String>>,
    pub response_kind: ResponseKind,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            east: "east".into(),
            north: "north".into(),
            response: "y".into(),
            features: None,
            response_kind: ResponseKind::Continuous,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<GeoDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_csv(file, schema)
}

/// Reads a headered CSV point table. Ids follow row order.
pub fn read_csv<R: Read>(reader: R, schema: &ColumnSchema) -> Result<GeoDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Empty("CSV has no header row".into()));
    }
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let east = find(&schema.east)?;
    let north = find(&schema.north)?;
    let response = find(&schema.response)?;
    let feature_cols: Vec<(usize, String)> = match &schema.features {
        Some(names) => names.iter().map(|n| find(n).map(|i| (i, n.clone()))).collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != east && i != north && i != response)
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };

    let mut rows = Vec::new();
    for (row_idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // 1-based data row number, header excluded.
        let row = row_idx + 1;
        let cell = |col: usize| -> Result<f64> {
            let name = headers.get(col).unwrap_or("?");
            let raw = rec.get(col).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("'{raw}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, column: name.to_string(), message: format!("'{raw}' is not finite") });
            }
            Ok(v)
        };
        let coord = Coord::new(cell(east)?, cell(north)?);
        let y = cell(response)?;
        if schema.response_kind == ResponseKind::Categorical && (y < 0.0 || y.fract() != 0.0) {
            return Err(Error::Parse {
                row,
                column: schema.response.clone(),
                message: format!("{y} is not a non-negative integer class label"),
            });
        }
        let features = feature_cols.iter().map(|&(c, _)| cell(c)).collect::<Result<Vec<_>>>()?;
        rows.push((coord, features, y));
    }
    if rows.is_empty() {
        return Err(Error::Empty("CSV has no data rows".into()));
    }
    let names = feature_cols.into_iter().map(|(_, n)| n).collect();
    GeoDataset::new(names, schema.response_kind, rows)
}

/// Writes the dataset as `east,north,<response>,<features...>` using the
/// schema's coordinate and response names.
pub fn write_csv<W: Write>(ds: &GeoDataset, writer: W, schema: &ColumnSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![schema.east.clone(), schema.north.clone(), schema.response.clone()];
    header.extend(ds.feature_names().iter().cloned());
    w.write_record(&header)?;
    for r in ds.records() {
        let mut row = vec![r.coord.x.to_string(), r.coord.y.to_string(), r.response.to_string()];
        row.extend(r.features.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| Error::Io { path: "<csv writer>".into(), source })?;
    Ok(())
}

/// Uniform random subset of `⌈fraction·M⌉` records without replacement.
/// Selected records keep their file order; ids are re-assigned contiguously.
pub fn subsample_density(ds: &GeoDataset, fraction: f64, seed: RngSeed) -> Result<GeoDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("density fraction {fraction} not in (0, 1]")));
    }
    let m = ds.len();
    // Guard against 0.1 * 30 = 3.0000000000000004 rounding up to 4.
    let n = ((fraction * m as f64) - 1e-9).ceil().max(1.0) as usize;
    let n = n.min(m);
    if n == m {
        let all: Vec<usize> = (0..m).collect();
        return ds.subset(&all);
    }
    let mut rng = seed.rng();
    let mut picked = rand::seq::index::sample(&mut rng, m, n).into_vec();
    picked.sort_unstable();
    ds.subset(&picked)
}
