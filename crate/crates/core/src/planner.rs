//! Hexagonal sampling design and the check of SKCV estimates against
//! realized sample-generalize performance on other areas.
//!
//! A triangular lattice with nearest-site spacing `a` has covering radius
//! `a / √3`, so sites spaced `√3·r` apart leave no point of the area farther
//! than `r` from a site.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{CrossValidator, DeadZoneSpec, EvaluationCurve, FoldScheme};
use crate::data::{subsample_density, Coord, GeoDataset, PointRecord, RngSeed};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::predict::{fit_standardizer, KnnModel, ModelConfig, StandardizeScope};

/// Axis-aligned rectangle in planar meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Coord,
    pub max: Coord,
}

impl Rect {
    pub fn new(min: Coord, max: Coord) -> Result<Self> {
        if !(max.x > min.x && max.y > min.y) || ![min.x, min.y, max.x, max.y].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rectangle needs positive width and height: ({}, {})..({}, {})",
                min.x, min.y, max.x, max.y
            )));
        }
        Ok(Self { min, max })
    }

    /// Bounding box of a dataset's coordinates.
    pub fn bounding(ds: &GeoDataset) -> Result<Self> {
        let mut min = Coord::new(f64::INFINITY, f64::INFINITY);
        let mut max = Coord::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for r in ds.records() {
            min = Coord::new(min.x.min(r.coord.x), min.y.min(r.coord.y));
            max = Coord::new(max.x.max(r.coord.x), max.y.max(r.coord.y));
        }
        Self::new(min, max)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed containment.
    pub fn contains(&self, c: Coord) -> bool {
        c.x >= self.min.x && c.x <= self.max.x && c.y >= self.min.y && c.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub area: Rect,
    pub sites: Vec<Coord>,
    pub covering_radius: f64,
    pub lattice_spacing: f64,
}

/// Triangular lattice anchored at the area's min corner, odd rows shifted by
/// half a spacing, keeping every site whose hexagonal cell can reach the area.
pub fn hex_lattice(area: &Rect, r_delta: f64) -> Result<SamplingPlan> {
    if !(r_delta > 0.0 && r_delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("sampling radius must be positive, got {r_delta}")));
    }
    let spacing = 3f64.sqrt() * r_delta;
    let row_step = 1.5 * r_delta;
    // A site matters only if it lies within r of the area (its Voronoi cell
    // has circumradius r); that is one ring beyond the rectangle.
    let keep = |c: Coord| {
        c.x >= area.min.x - r_delta
            && c.x <= area.max.x + r_delta
            && c.y >= area.min.y - r_delta
            && c.y <= area.max.y + r_delta
    };
    let rows = (area.height() / row_step).ceil() as i64 + 1;
    let cols = (area.width() / spacing).ceil() as i64 + 1;
    let mut sites = Vec::new();
    for j in -1..=rows {
        let y = area.min.y + j as f64 * row_step;
        let offset = if j.rem_euclid(2) == 1 { 0.5 * spacing } else { 0.0 };
        for i in -1..=cols {
            let c = Coord::new(area.min.x + i as f64 * spacing + offset, y);
            if keep(c) {
                sites.push(c);
            }
        }
    }
    Ok(SamplingPlan { area: *area, sites, covering_radius: r_delta, lattice_spacing: spacing })
}

impl SamplingPlan {
    /// Largest distance from any probe point on a `pitch`-spaced grid over
    /// the area to its nearest site.
    pub fn max_probe_distance(&self, pitch: f64) -> f64 {
        let idx = SpatialIndex::from_coords(self.sites.clone());
        let nx = (self.area.width() / pitch).floor() as usize;
        let ny = (self.area.height() / pitch).floor() as usize;
        let mut worst: f64 = 0.0;
        let mut probe = |c: Coord| {
            let nearest = idx.k_nearest_coords(c, 1, |_| false).expect("plan has sites")[0];
            worst = worst.max(crate::data::spatial_distance(c, self.sites[nearest]));
        };
        for iy in 0..=ny + 1 {
            let y = if iy > ny { self.area.max.y } else { self.area.min.y + iy as f64 * pitch };
            for ix in 0..=nx + 1 {
                let x = if ix > nx { self.area.max.x } else { self.area.min.x + ix as f64 * pitch };
                probe(Coord::new(x, y));
            }
        }
        worst
    }
}

/// Training record ids realizing a plan: the nearest record to each site,
/// deduplicated and ascending.
pub fn realize_sites(ds: &GeoDataset, plan: &SamplingPlan) -> Vec<usize> {
    let idx = SpatialIndex::build(ds);
    let mut ids: Vec<usize> =
        plan.sites.iter().map(|&s| idx.k_nearest_coords(s, 1, |_| false).expect("non-empty dataset")[0]).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Trains on the records nearest to a hexagonal lattice with covering radius
/// `r_delta` over `area` and scores the model on every other record.
pub fn sample_generalize(ds: &GeoDataset, area: &Rect, r_delta: f64, model: &ModelConfig) -> Result<f64> {
    let plan = hex_lattice(area, r_delta)?;
    let training = realize_sites(ds, &plan);
    if training.len() == ds.len() {
        return Err(Error::NothingToTest(ds.len()));
    }
    if training.len() < model.k {
        return Err(Error::InsufficientCandidates { requested: model.k, available: training.len() });
    }
    let mut is_train = vec![false; ds.len()];
    for &id in &training {
        is_train[id] = true;
    }
    let train: Vec<&PointRecord> = training.iter().map(|&id| ds.record(id)).collect();
    let params = match model.standardize {
        StandardizeScope::Fold => fit_standardizer(&train)?,
        StandardizeScope::Global => fit_standardizer(&ds.records().iter().collect::<Vec<_>>())?,
    };
    let knn = KnnModel::fit(model.k, model.task, params, &train)?;
    let (mut pred, mut actual) = (Vec::new(), Vec::new());
    for r in ds.records().iter().filter(|r| !is_train[r.id]) {
        pred.push(knn.predict(&r.features)?);
        actual.push(r.response);
    }
    model.metric().score(&pred, &actual)
}

/// `g × g` equal cells tiling `area`, row-major from the min corner.
pub fn partition_grid(area: &Rect, g: usize) -> Result<Vec<Rect>> {
    if g < 2 {
        return Err(Error::InvalidArgument(format!("grid size must be at least 2, got {g}")));
    }
    let xs = grid_lines(area.min.x, area.max.x, g);
    let ys = grid_lines(area.min.y, area.max.y, g);
    let mut cells = Vec::with_capacity(g * g);
    for j in 0..g {
        for i in 0..g {
            cells.push(Rect::new(Coord::new(xs[i], ys[j]), Coord::new(xs[i + 1], ys[j + 1]))?);
        }
    }
    Ok(cells)
}

fn grid_lines(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=g).map(|i| lo + (hi - lo) * i as f64 / g as f64).collect();
    v[g] = hi;
    v
}

/// Cell index (row-major) for each record inside `area`. A record on a
/// shared edge belongs to the cell whose min corner lies on that edge;
/// records on the area's max edges go to the last row or column.
pub fn assign_to_cells(ds: &GeoDataset, area: &Rect, g: usize) -> Result<Vec<Option<usize>>> {
    let xs = grid_lines(area.min.x, area.max.x, g);
    let ys = grid_lines(area.min.y, area.max.y, g);
    let slot = |lines: &[f64], v: f64| lines[..g].partition_point(|&l| l <= v).saturating_sub(1);
    Ok(ds
        .records()
        .iter()
        .map(|r| area.contains(r.coord).then(|| slot(&ys, r.coord.y) * g + slot(&xs, r.coord.x)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDifference {
    pub r_delta: f64,
    /// Mean of `result_A - result_B` over evaluated pairs.
    pub mean_diff: Option<f64>,
    /// Population standard deviation of the differences.
    pub std_diff: Option<f64>,
    pub pair_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDifferenceSummary {
    pub density_fraction: f64,
    pub rows: Vec<PairDifference>,
    pub skipped: Vec<PairSkip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSkip {
    pub area_a: usize,
    pub area_b: usize,
    pub r_delta: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsConfig {
    pub area: Rect,
    pub grid: usize,
    pub radii: DeadZoneSpec,
    pub densities: Vec<f64>,
    pub folds: FoldScheme,
    pub model: ModelConfig,
    pub seed: RngSeed,
}

/// For every ordered pair `(A, B)` of distinct grid cells and every radius:
/// SKCV on A's records (at the configured density) minus sample-generalize
/// on B's records. With an error metric a positive mean means SKCV was
/// pessimistic.
pub fn pairwise_bias_variance(ds: &GeoDataset, cfg: &PairsConfig) -> Result<Vec<PairDifferenceSummary>> {
    if cfg.densities.is_empty() {
        return Err(Error::InvalidArgument("at least one density fraction is required".into()));
    }
    let g = cfg.grid;
    let cells = partition_grid(&cfg.area, g)?;
    let owner = assign_to_cells(ds, &cfg.area, g)?;
    let cell_data: Vec<Option<GeoDataset>> = (0..cells.len())
        .map(|c| {
            let ids: Vec<usize> = (0..ds.len()).filter(|&i| owner[i] == Some(c)).collect();
            (!ids.is_empty()).then(|| ds.subset(&ids)).transpose()
        })
        .collect::<Result<_>>()?;
    let radii = cfg.radii.radii();

    // Sample-generalize depends only on (B, r).
    let generalize: Vec<Vec<std::result::Result<f64, String>>> = cells
        .par_iter()
        .zip(&cell_data)
        .map(|(rect, data)| {
            radii
                .iter()
                .map(|&r| match data {
                    Some(d) => sample_generalize(d, rect, r, &cfg.model).map_err(|e| e.to_string()),
                    None => Err("area has no records".to_string()),
                })
                .collect()
        })
        .collect();

    let pairs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|a| (0..cells.len()).filter(move |&b| b != a).map(move |b| (a, b))).collect();

    cfg.densities
        .iter()
        .enumerate()
        .map(|(di, &fraction)| {
            // result_A per pair, each pair with its own RNG stream.
            let skcv: Vec<Vec<std::result::Result<f64, String>>> = pairs
                .par_iter()
                .enumerate()
                .map(|(p, &(a, _))| {
                    let seed = cfg.seed.derive(di as u64).derive(p as u64);
                    skcv_on_area(cell_data[a].as_ref(), radii, fraction, cfg, seed)
                })
                .collect();

            let mut skipped = Vec::new();
            let mut diffs: Vec<Vec<f64>> = vec![Vec::new(); radii.len()];
            for (p, &(a, b)) in pairs.iter().enumerate() {
                for (ri, &r) in radii.iter().enumerate() {
                    match (&skcv[p][ri], &generalize[b][ri]) {
                        (Ok(ra), Ok(rb)) => diffs[ri].push(ra - rb),
                        (Err(e), _) | (_, Err(e)) => {
                            warn!("pair ({a}, {b}) skipped at r_delta = {r}: {e}");
                            skipped.push(PairSkip { area_a: a, area_b: b, r_delta: r, reason: e.clone() });
                        }
                    }
                }
            }
            if diffs.iter().all(Vec::is_empty) {
                return Err(Error::AllPairsSkipped);
            }
            let rows = radii
                .iter()
                .zip(&diffs)
                .map(|(&r, d)| {
                    let n = d.len();
                    let mean = (n > 0).then(|| d.iter().sum::<f64>() / n as f64);
                    let std = mean.map(|m| (d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt());
                    PairDifference { r_delta: r, mean_diff: mean, std_diff: std, pair_count: n }
                })
                .collect();
            Ok(PairDifferenceSummary { density_fraction: fraction, rows, skipped })
        })
        .collect()
}

fn skcv_on_area(
    data: Option<&GeoDataset>,
    radii: &[f64],
    fraction: f64,
    cfg: &PairsConfig,
    seed: RngSeed,
) -> Vec<std::result::Result<f64, String>> {
    let fail = |e: String| radii.iter().map(|_| Err(e.clone())).collect();
    let Some(data) = data else {
        return fail("area has no records".into());
    };
    let prepared = subsample_density(data, fraction, seed.derive(0)).and_then(|sub| {
        let plan = cfg.folds.plan_for(&sub, seed.derive(1))?;
        Ok((sub, plan))
    });
    let (sub, plan) = match prepared {
        Ok(v) => v,
        Err(e) => return fail(e.to_string()),
    };
    let cv = match CrossValidator::new(&sub, cfg.model) {
        Ok(cv) => cv,
        Err(e) => return fail(e.to_string()),
    };
    radii
        .iter()
        .map(|&r| {
            cv.skcv(&plan, r).and_then(|run| run.metric(&sub, cfg.model.metric())).map_err(|e| e.to_string())
        })
        .collect()
}

/// Largest radius whose (linearly interpolated) curve value still meets
/// `target`: at most `target` for RMSE, at least `target` for accuracy.
pub fn radius_for_target(curve: &EvaluationCurve, target: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve.points.iter().filter_map(|p| p.metric.map(|m| (p.r_delta, m))).collect();
    if pts.is_empty() {
        return Err(Error::Empty("curve has no metric values".into()));
    }
    let kind = curve.metric_kind;
    let (min, max) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, m)| (lo.min(m), hi.max(m)));
    let last = pts[pts.len() - 1];
    if kind.meets(last.1, target) {
        return Ok(last.0);
    }
    for w in pts.windows(2).rev() {
        let ((r0, m0), (r1, m1)) = (w[0], w[1]);
        if kind.meets(m0, target) {
            // m1 misses the target, so the crossing lies in [r0, r1).
            return Ok(r0 + (target - m0) / (m1 - m0) * (r1 - r0));
        }
    }
    Err(Error::TargetUnreachable { target, min, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cv::CurvePoint;
    use crate::data::ResponseKind;
    use crate::predict::MetricKind;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
        Rect::new(Coord::new(x0, y0), Coord::new(x1, y1)).unwrap()
    }

    #[test]
    fn rect_validation() {
        assert!(Rect::new(Coord::new(0.0, 0.0), Coord::new(0.0, 1.0)).is_err());
        assert!(Rect::new(Coord::new(0.0, 0.0), Coord::new(1.0, -1.0)).is_err());
    }

    #[test]
    fn tiny_area_single_site_covers() {
        let plan = hex_lattice(&rect(0.0, 0.0, 1.0, 1.0), 100.0).unwrap();
        assert!(plan.max_probe_distance(0.25) <= 100.0);
        // The origin site alone covers the whole square.
        assert!(plan.sites.contains(&Coord::new(0.0, 0.0)));
        assert!((plan.lattice_spacing - 3f64.sqrt() * 100.0).abs() < 1e-12);
    }

    #[test]
    fn covering_holds_on_odd_shapes() {
        for (area, r) in [(rect(0.0, 0.0, 100.0, 37.0), 7.3), (rect(-50.0, 20.0, 10.0, 200.0), 13.0), (rect(0.0, 0.0, 5.0, 5.0), 0.9)] {
            let plan = hex_lattice(&area, r).unwrap();
            assert!(plan.max_probe_distance(0.5) <= r, "{area:?} {r}");
        }
    }

    #[test]
    fn halving_radius_quadruples_sites() {
        let area = rect(0.0, 0.0, 1000.0, 1000.0);
        let a = hex_lattice(&area, 50.0).unwrap().sites.len() as f64;
        let b = hex_lattice(&area, 25.0).unwrap().sites.len() as f64;
        assert!((b / a - 4.0).abs() / 4.0 < 0.15, "{a} {b}");
    }

    #[test]
    fn partition_three_by_three() {
        let cells = partition_grid(&rect(0.0, 0.0, 12_000.0, 12_000.0), 3).unwrap();
        assert_eq!(cells.len(), 9);
        for (n, c) in cells.iter().enumerate() {
            assert_eq!(c.area(), 16.0e6);
            assert_eq!(c.min, Coord::new(4000.0 * (n % 3) as f64, 4000.0 * (n / 3) as f64));
        }
        assert!(partition_grid(&rect(0.0, 0.0, 1.0, 1.0), 1).is_err());
    }

    #[test]
    fn boundary_records_go_to_upper_cell() {
        let rows = vec![
            (Coord::new(5.0, 5.0), vec![], 0.0),
            (Coord::new(10.0, 5.0), vec![], 0.0),
            (Coord::new(20.0, 20.0), vec![], 0.0),
            (Coord::new(0.0, 10.0), vec![], 0.0),
            (Coord::new(25.0, 5.0), vec![], 0.0),
        ];
        let ds = GeoDataset::new(vec![], ResponseKind::Continuous, rows).unwrap();
        let owner = assign_to_cells(&ds, &rect(0.0, 0.0, 20.0, 20.0), 2).unwrap();
        assert_eq!(owner, vec![Some(0), Some(1), Some(3), Some(2), None]);
    }

    fn curve(points: &[(f64, f64)], kind: MetricKind) -> EvaluationCurve {
        EvaluationCurve {
            density_fraction: 1.0,
            metric_kind: kind,
            points: points
                .iter()
                .map(|&(r, m)| CurvePoint { r_delta: r, metric: Some(m), mean_removed: 0.0, skipped_folds: 0 })
                .collect(),
            skip_log: vec![],
        }
    }

    #[test]
    fn curve_inversion() {
        let c = curve(&[(0.0, 0.5), (10.0, 0.7), (20.0, 0.9)], MetricKind::Rmse);
        assert_eq!(radius_for_target(&c, 0.7).unwrap(), 10.0);
        assert!((radius_for_target(&c, 0.6).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(radius_for_target(&c, 1.0).unwrap(), 20.0);
        assert!(matches!(radius_for_target(&c, 0.4), Err(Error::TargetUnreachable { .. })));
        let a = curve(&[(0.0, 0.9), (10.0, 0.8), (20.0, 0.6)], MetricKind::Accuracy);
        assert!((radius_for_target(&a, 0.7).unwrap() - 15.0).abs() < 1e-12);
    }
}
