//! Spatial autocorrelation diagnostics of the response: empirical
//! semivariogram with lag tolerance and a Moran's I correlogram.
//!
//! A lag bin centered at `m` with tolerance `t` holds every unordered record
//! pair whose spatial distance lies in `[m - t, m + t]`. Bins may overlap.
//! The semivariogram uses the Matheron estimator
//! `γ(m) = Σ (y_i - y_j)² / (2·|pairs|)`; Moran's I uses binary band weights
//! counted in both orders, `I = (M / W) Σ_ij w_ij z_i z_j / Σ_i z_i²`.

use serde::{Deserialize, Serialize};

use crate::data::GeoDataset;
use crate::error::{Error, Result};
use crate::index::SpatialIndex;

/// Fraction of the sill a variogram must reach to define the effective range.
pub const EFFECTIVE_RANGE_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagGrid {
    centers: Vec<f64>,
    tolerance: f64,
}

impl LagGrid {
    pub fn new(centers: Vec<f64>, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!("lag tolerance must be positive, got {tolerance}")));
        }
        if centers.is_empty() {
            return Err(Error::InvalidArgument("lag grid needs at least one center".into()));
        }
        if centers.iter().any(|c| !c.is_finite() || *c < 0.0) || centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("lag centers must be finite, non-negative and strictly ascending".into()));
        }
        Ok(Self { centers, tolerance })
    }

    /// `count` centers `first, first + step, ...`.
    pub fn uniform(first: f64, step: f64, count: usize, tolerance: f64) -> Result<Self> {
        Self::new((0..count).map(|i| first + step * i as f64).collect(), tolerance)
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Lower and upper distance bound of bin `i`.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        let m = self.centers[i];
        ((m - self.tolerance).max(0.0), m + self.tolerance)
    }

    fn max_distance(&self) -> f64 {
        self.centers[self.centers.len() - 1] + self.tolerance
    }

    /// Range of bin indices whose band contains `d`.
    fn bins_containing(&self, d: f64) -> std::ops::Range<usize> {
        let t = self.tolerance;
        let lo = self.centers.partition_point(|&m| m + t < d);
        let hi = self.centers.partition_point(|&m| m - t <= d);
        lo..hi.max(lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramBin {
    pub lag_center: f64,
    /// `None` for bins without pairs.
    pub gamma: Option<f64>,
    pub pair_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramEstimate {
    pub bins: Vec<VariogramBin>,
    /// Sample variance of the response.
    pub sill: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelogramBin {
    pub lag_center: f64,
    /// `None` for bins without pairs.
    pub moran_i: Option<f64>,
    pub pair_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelogramEstimate {
    pub bins: Vec<CorrelogramBin>,
    /// No-correlation reference line.
    pub baseline: f64,
}

struct BinSums {
    count: Vec<usize>,
    sq_diff: Vec<f64>,
    cross: Vec<f64>,
}

fn accumulate(ds: &GeoDataset, lags: &LagGrid, mean: f64) -> BinSums {
    let idx = SpatialIndex::build(ds);
    let y = ds.responses();
    let n = lags.centers.len();
    let mut sums = BinSums { count: vec![0; n], sq_diff: vec![0.0; n], cross: vec![0.0; n] };
    idx.for_each_pair_within(lags.max_distance(), |i, j, d| {
        let diff = y[i] - y[j];
        let cross = (y[i] - mean) * (y[j] - mean);
        for b in lags.bins_containing(d) {
            sums.count[b] += 1;
            sums.sq_diff[b] += diff * diff;
            sums.cross[b] += cross;
        }
    });
    sums
}

fn mean_and_ss(y: &[f64]) -> (f64, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss)
}

fn is_constant(y: &[f64]) -> bool {
    y.iter().all(|&v| v == y[0])
}

pub fn semivariogram(ds: &GeoDataset, lags: &LagGrid) -> Result<VariogramEstimate> {
    if ds.len() < 2 {
        return Err(Error::InvalidArgument("semivariogram needs at least two records".into()));
    }
    let y = ds.responses();
    let (mean, ss) = mean_and_ss(&y);
    let sill = if is_constant(&y) { 0.0 } else { ss / (y.len() - 1) as f64 };
    let sums = accumulate(ds, lags, mean);
    if sums.count.iter().all(|&c| c == 0) {
        return Err(Error::AllBinsEmpty);
    }
    let bins = lags
        .centers
        .iter()
        .enumerate()
        .map(|(b, &m)| VariogramBin {
            lag_center: m,
            gamma: (sums.count[b] > 0).then(|| sums.sq_diff[b] / (2.0 * sums.count[b] as f64)),
            pair_count: sums.count[b],
        })
        .collect();
    Ok(VariogramEstimate { bins, sill })
}

pub fn morans_i(ds: &GeoDataset, lags: &LagGrid) -> Result<CorrelogramEstimate> {
    let y = ds.responses();
    if ds.len() < 2 || is_constant(&y) {
        return Err(Error::ConstantResponse);
    }
    let (mean, ss) = mean_and_ss(&y);
    let sums = accumulate(ds, lags, mean);
    let m = ds.len() as f64;
    let bins = lags
        .centers
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let p = sums.count[b];
            // W = 2p and Σ_ij over both orders = 2·cross, so the 2s cancel.
            let moran_i = (p > 0).then(|| m * sums.cross[b] / (p as f64 * ss));
            CorrelogramBin { lag_center: c, moran_i, pair_count: p }
        })
        .collect();
    Ok(CorrelogramEstimate { bins, baseline: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SillRange {
    pub sill: f64,
    /// Smallest lag center with γ ≥ 0.95·sill; `f64::INFINITY` if never
    /// reached.
    pub effective_range: f64,
}

pub fn fit_sill_range(v: &VariogramEstimate) -> Result<SillRange> {
    let filled: Vec<(f64, f64)> = v.bins.iter().filter_map(|b| b.gamma.map(|g| (b.lag_center, g))).collect();
    if filled.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 non-empty lag bins to fit a range, got {}",
            filled.len()
        )));
    }
    let threshold = EFFECTIVE_RANGE_FRACTION * v.sill;
    let effective_range = filled.iter().find(|(_, g)| *g >= threshold).map_or(f64::INFINITY, |(m, _)| *m);
    Ok(SillRange { sill: v.sill, effective_range })
}
