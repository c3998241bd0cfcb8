//! Spatial k-fold cross validation.
//!
//! For every test fold, all records within the dead-zone radius of any fold
//! member are dropped from the training set before the model is fitted
//! (boundary inclusive, so every retained training record is strictly
//! farther than `r_delta` from every test record). With `r_delta = 0` and no
//! co-located records this is ordinary k-fold CV; with one record per fold
//! it is spatial leave-one-out.
//!
//! The random-leave-out control removes the same number of training records
//! per fold, chosen uniformly from everything outside the fold.

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{subsample_density, GeoDataset, PointRecord, RngSeed};
use crate::error::{Error, Result};
use crate::index::SpatialIndex;
use crate::predict::{fit_standardizer, KnnModel, MetricKind, ModelConfig, StandardizationParams, StandardizeScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldConstruction {
    RandomKFold,
    LeaveOneOut,
    UserSupplied,
}

/// Disjoint test folds covering every record id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
    construction: FoldConstruction,
    seed: Option<RngSeed>,
}

impl FoldPlan {
    pub fn leave_one_out(m: usize) -> Self {
        Self { folds: (0..m).map(|i| vec![i]).collect(), construction: FoldConstruction::LeaveOneOut, seed: None }
    }

    /// Validates that `folds` partitions `0..m` into non-empty sets.
    pub fn user_supplied(folds: Vec<Vec<usize>>, m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for (f, fold) in folds.iter().enumerate() {
            if fold.is_empty() {
                return Err(Error::InvalidArgument(format!("fold {f} is empty")));
            }
            for &id in fold {
                if id >= m {
                    return Err(Error::InvalidArgument(format!("fold {f} references id {id} >= {m}")));
                }
                if std::mem::replace(&mut seen[id], true) {
                    return Err(Error::InvalidArgument(format!("id {id} appears in more than one fold")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("id {missing} is not in any fold")));
        }
        let folds = folds
            .into_iter()
            .map(|mut f| {
                f.sort_unstable();
                f
            })
            .collect();
        Ok(Self { folds, construction: FoldConstruction::UserSupplied, seed: None })
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn construction(&self) -> FoldConstruction {
        self.construction
    }

    pub fn seed(&self) -> Option<RngSeed> {
        self.seed
    }
}

/// Shuffles ids with `seed` and deals them round-robin into `k` folds, so
/// fold sizes differ by at most one. `k = M` gives singleton folds.
pub fn make_folds(m: usize, k: usize, seed: RngSeed) -> Result<FoldPlan> {
    if k < 2 || k > m {
        return Err(Error::InvalidArgument(format!("fold count {k} must satisfy 1 < k <= {m}")));
    }
    let mut ids: Vec<usize> = (0..m).collect();
    ids.shuffle(&mut seed.rng());
    let mut folds = vec![Vec::with_capacity(m / k + 1); k];
    for (pos, id) in ids.into_iter().enumerate() {
        folds[pos % k].push(id);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { folds, construction: FoldConstruction::RandomKFold, seed: Some(seed) })
}

/// Ascending, non-negative dead-zone radii in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadZoneSpec {
    radii: Vec<f64>,
}

impl DeadZoneSpec {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidArgument("at least one dead-zone radius is required".into()));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("radii must be finite, non-negative and strictly ascending".into()));
        }
        Ok(Self { radii })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadZoneSplit {
    /// Records outside the fold and outside every dead zone, ascending.
    pub training: Vec<usize>,
    /// Records inside some dead zone that are not fold members, ascending.
    pub removed: Vec<usize>,
}

/// Splits the non-fold records of `ds` by distance to the fold members.
pub fn dead_zone_filter(ds: &GeoDataset, idx: &SpatialIndex, fold: &[usize], r_delta: f64) -> DeadZoneSplit {
    let m = ds.len();
    // 0 = training, 1 = removed, 2 = fold
    let mut state = vec![0u8; m];
    for &id in fold {
        state[id] = 2;
    }
    for &id in fold {
        for j in idx.within_radius(ds.record(id).coord, r_delta) {
            if state[j] == 0 {
                state[j] = 1;
            }
        }
    }
    let mut split = DeadZoneSplit { training: Vec::new(), removed: Vec::new() };
    for (id, s) in state.into_iter().enumerate() {
        match s {
            0 => split.training.push(id),
            1 => split.removed.push(id),
            _ => {}
        }
    }
    split
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_size: usize,
    /// Non-fold records excluded from training.
    pub removed_ids: Vec<usize>,
    pub retained_training_size: usize,
    /// `(record id, prediction)` for every fold member; empty when skipped.
    pub predictions: Vec<(usize, f64)>,
    pub skipped: Option<String>,
}

/// Predictions indexed by record id plus the per-fold bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRun {
    pub predictions: Vec<Option<f64>>,
    pub outcomes: Vec<FoldOutcome>,
}

impl CvRun {
    pub fn skipped_folds(&self) -> usize {
        self.outcomes.iter().filter(|o| o.skipped.is_some()).count()
    }

    pub fn mean_removed(&self) -> f64 {
        let total: usize = self.outcomes.iter().map(|o| o.removed_ids.len()).sum();
        total as f64 / self.outcomes.len().max(1) as f64
    }

    /// Metric pooled over every predicted record.
    pub fn metric(&self, ds: &GeoDataset, kind: MetricKind) -> Result<f64> {
        let (pred, actual): (Vec<f64>, Vec<f64>) = self
            .predictions
            .iter()
            .zip(ds.records())
            .filter_map(|(p, r)| p.map(|p| (p, r.response)))
            .unzip();
        kind.score(&pred, &actual)
    }
}

#[derive(Debug, Clone, Copy)]
enum Removal {
    DeadZone,
    Random(RngSeed),
}

/// Shared state for repeated CV runs over one dataset.
pub struct CrossValidator<'a> {
    ds: &'a GeoDataset,
    idx: SpatialIndex,
    model: ModelConfig,
    global_params: Option<StandardizationParams>,
    strict: bool,
}

impl<'a> CrossValidator<'a> {
    pub fn new(ds: &'a GeoDataset, model: ModelConfig) -> Result<Self> {
        if model.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let global_params = match model.standardize {
            StandardizeScope::Global => Some(fit_standardizer(&ds.records().iter().collect::<Vec<_>>())?),
            StandardizeScope::Fold => None,
        };
        Ok(Self { ds, idx: SpatialIndex::build(ds), model, global_params, strict: false })
    }

    /// Abort instead of skipping folds whose training set is smaller than k.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn dataset(&self) -> &GeoDataset {
        self.ds
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.idx
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    pub fn skcv(&self, plan: &FoldPlan, r_delta: f64) -> Result<CvRun> {
        self.run(plan, r_delta, Removal::DeadZone)
    }

    pub fn rlo(&self, plan: &FoldPlan, r_delta: f64, seed: RngSeed) -> Result<CvRun> {
        self.run(plan, r_delta, Removal::Random(seed))
    }

    fn check_plan(&self, plan: &FoldPlan) -> Result<()> {
        let m = self.ds.len();
        let covered: usize = plan.folds.iter().map(Vec::len).sum();
        if covered != m || plan.folds.iter().flatten().any(|&id| id >= m) {
            return Err(Error::InvalidArgument(format!("fold plan covers {covered} ids, dataset has {m}")));
        }
        Ok(())
    }

    fn run(&self, plan: &FoldPlan, r_delta: f64, removal: Removal) -> Result<CvRun> {
        if !(r_delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("dead-zone radius must be non-negative, got {r_delta}")));
        }
        self.check_plan(plan)?;
        let outcomes: Vec<FoldOutcome> = plan
            .folds
            .par_iter()
            .enumerate()
            .map(|(f, fold)| self.run_fold(f, fold, r_delta, removal))
            .collect::<Result<_>>()?;

        let mut predictions = vec![None; self.ds.len()];
        for o in &outcomes {
            if let Some(reason) = &o.skipped {
                if self.strict {
                    return Err(Error::StrictSkip { fold: o.fold, reason: reason.clone() });
                }
                warn!("fold {} skipped at r_delta = {r_delta}: {reason}", o.fold);
            }
            for &(id, p) in &o.predictions {
                predictions[id] = Some(p);
            }
        }
        if outcomes.iter().all(|o| o.skipped.is_some()) {
            return Err(Error::DeadZoneExhaustsData { r_delta });
        }
        Ok(CvRun { predictions, outcomes })
    }

    fn run_fold(&self, f: usize, fold: &[usize], r_delta: f64, removal: Removal) -> Result<FoldOutcome> {
        let split = dead_zone_filter(self.ds, &self.idx, fold, r_delta);
        let (training, removed) = match removal {
            Removal::DeadZone => (split.training, split.removed),
            Removal::Random(seed) => random_leave_out(self.ds.len(), fold, split.removed.len(), seed.derive(f as u64)),
        };
        let mut outcome = FoldOutcome {
            fold: f,
            test_size: fold.len(),
            retained_training_size: training.len(),
            removed_ids: removed,
            predictions: Vec::new(),
            skipped: None,
        };
        if training.len() < self.model.k {
            outcome.skipped = Some(format!(
                "retained training size {} is smaller than k = {}",
                training.len(),
                self.model.k
            ));
            return Ok(outcome);
        }
        if matches!(removal, Removal::DeadZone) {
            debug_assert!(self.dead_zone_holds(fold, &training, r_delta));
        }
        let train: Vec<&PointRecord> = training.iter().map(|&id| self.ds.record(id)).collect();
        let params = match &self.global_params {
            Some(p) => p.clone(),
            None => fit_standardizer(&train)?,
        };
        let model = KnnModel::fit(self.model.k, self.model.task, params, &train)?;
        outcome.predictions = fold
            .iter()
            .map(|&id| model.predict(&self.ds.record(id).features).map(|p| (id, p)))
            .collect::<Result<_>>()?;
        Ok(outcome)
    }

    fn dead_zone_holds(&self, fold: &[usize], training: &[usize], r_delta: f64) -> bool {
        fold.iter().all(|&t| {
            let c = self.ds.record(t).coord;
            training.iter().all(|&j| crate::data::spatial_distance(c, self.ds.record(j).coord) > r_delta)
        })
    }
}

/// Removes `count` ids chosen uniformly from everything outside `fold`.
fn random_leave_out(m: usize, fold: &[usize], count: usize, seed: RngSeed) -> (Vec<usize>, Vec<usize>) {
    let mut in_fold = vec![false; m];
    for &id in fold {
        in_fold[id] = true;
    }
    let candidates: Vec<usize> = (0..m).filter(|&id| !in_fold[id]).collect();
    let mut rng = seed.rng();
    let mut drop = vec![false; candidates.len()];
    for pos in rand::seq::index::sample(&mut rng, candidates.len(), count.min(candidates.len())) {
        drop[pos] = true;
    }
    let (mut training, mut removed) = (Vec::new(), Vec::new());
    for (pos, id) in candidates.into_iter().enumerate() {
        if drop[pos] {
            removed.push(id);
        } else {
            training.push(id);
        }
    }
    (training, removed)
}

/// Dead-zone filtering, fitting and prediction for every fold of a prepared plan.
pub fn run_skcv(ds: &GeoDataset, plan: &FoldPlan, r_delta: f64, model: &ModelConfig) -> Result<CvRun> {
    CrossValidator::new(ds, *model)?.skcv(plan, r_delta)
}

/// Random-leave-out control with the same per-fold removal counts as SKCV.
pub fn run_skcv_rlo(
    ds: &GeoDataset,
    plan: &FoldPlan,
    r_delta: f64,
    model: &ModelConfig,
    seed: RngSeed,
) -> Result<CvRun> {
    CrossValidator::new(ds, *model)?.rlo(plan, r_delta, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Skcv,
    Rlo,
}

/// How test folds are formed for each (possibly subsampled) dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    KFold(usize),
    LeaveOneOut,
    /// Fold lists of record ids in the full dataset. Under subsampling,
    /// folds are restricted to the surviving records.
    Supplied(Vec<Vec<usize>>),
}

impl FoldScheme {
    pub fn plan_for(&self, ds: &GeoDataset, seed: RngSeed) -> Result<FoldPlan> {
        match self {
            FoldScheme::KFold(k) => make_folds(ds.len(), *k, seed),
            FoldScheme::LeaveOneOut => Ok(FoldPlan::leave_one_out(ds.len())),
            FoldScheme::Supplied(folds) => {
                let max_src = ds.records().iter().map(|r| r.source_id).max().unwrap_or(0);
                let mut new_id = vec![usize::MAX; max_src + 1];
                for r in ds.records() {
                    new_id[r.source_id] = r.id;
                }
                let mapped: Vec<Vec<usize>> = folds
                    .iter()
                    .map(|f| f.iter().filter_map(|&s| new_id.get(s).copied().filter(|&i| i != usize::MAX)).collect::<Vec<_>>())
                    .filter(|f: &Vec<usize>| !f.is_empty())
                    .collect();
                FoldPlan::user_supplied(mapped, ds.len())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r_delta: f64,
    /// `None` when every fold was skipped.
    pub metric: Option<f64>,
    pub mean_removed: f64,
    pub skipped_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipEvent {
    pub r_delta: f64,
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationCurve {
    pub density_fraction: f64,
    pub metric_kind: MetricKind,
    pub points: Vec<CurvePoint>,
    pub skip_log: Vec<SkipEvent>,
}

impl EvaluationCurve {
    pub fn metric_at(&self, r_delta: f64) -> Option<f64> {
        self.points.iter().find(|p| p.r_delta == r_delta).and_then(|p| p.metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub radii: DeadZoneSpec,
    pub densities: Vec<f64>,
    pub mode: SweepMode,
    pub folds: FoldScheme,
    pub model: ModelConfig,
    pub strict: bool,
    pub seed: RngSeed,
}

/// Evaluates every radius on one seeded subsample per density fraction.
pub fn sweep(ds: &GeoDataset, cfg: &SweepConfig) -> Result<Vec<EvaluationCurve>> {
    if cfg.densities.is_empty() {
        return Err(Error::InvalidArgument("at least one density fraction is required".into()));
    }
    cfg.densities.iter().enumerate().map(|(di, &fraction)| sweep_density(ds, cfg, di, fraction)).collect()
}

fn sweep_density(ds: &GeoDataset, cfg: &SweepConfig, di: usize, fraction: f64) -> Result<EvaluationCurve> {
    let base = cfg.seed.derive(di as u64);
    let sub = subsample_density(ds, fraction, base.derive(0))?;
    let plan = cfg.folds.plan_for(&sub, base.derive(1))?;
    let cv = CrossValidator::new(&sub, cfg.model)?.strict(cfg.strict);
    let kind = cfg.model.metric();
    let mut points = Vec::with_capacity(cfg.radii.radii().len());
    let mut skip_log = Vec::new();
    for &r in cfg.radii.radii() {
        let result = match cfg.mode {
            SweepMode::Skcv => cv.skcv(&plan, r),
            SweepMode::Rlo => cv.rlo(&plan, r, base.derive(2)),
        };
        match result {
            Ok(run) => {
                skip_log.extend(run.outcomes.iter().filter_map(|o| {
                    o.skipped.as_ref().map(|reason| SkipEvent { r_delta: r, fold: o.fold, reason: reason.clone() })
                }));
                points.push(CurvePoint {
                    r_delta: r,
                    metric: Some(run.metric(&sub, kind)?),
                    mean_removed: run.mean_removed(),
                    skipped_folds: run.skipped_folds(),
                });
            }
            Err(Error::DeadZoneExhaustsData { .. }) => {
                warn!("density {fraction}: every fold skipped at r_delta = {r}");
                // Recompute the bookkeeping for the record.
                let removed: usize = plan.folds().iter().map(|f| dead_zone_filter(&sub, cv.index(), f, r).removed.len()).sum();
                skip_log.extend((0..plan.len()).map(|fold| SkipEvent {
                    r_delta: r,
                    fold,
                    reason: "dead zone exhausts training data".into(),
                }));
                points.push(CurvePoint {
                    r_delta: r,
                    metric: None,
                    mean_removed: removed as f64 / plan.len() as f64,
                    skipped_folds: plan.len(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EvaluationCurve { density_fraction: fraction, metric_kind: kind, points, skip_log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Coord, ResponseKind};

    fn line_ds() -> GeoDataset {
        let rows = (0..5).map(|i| (Coord::new(10.0 * i as f64, 0.0), vec![i as f64], i as f64)).collect();
        GeoDataset::new(vec!["f".into()], ResponseKind::Continuous, rows).unwrap()
    }

    #[test]
    fn fold_sizes_and_slo_case() {
        let plan = make_folds(10, 5, RngSeed(1)).unwrap();
        assert_eq!(plan.len(), 5);
        assert!(plan.folds().iter().all(|f| f.len() == 2));
        let loo = make_folds(7, 7, RngSeed(1)).unwrap();
        assert!(loo.folds().iter().all(|f| f.len() == 1));
        assert_eq!(make_folds(10, 5, RngSeed(1)).unwrap(), plan);
        assert!(make_folds(10, 1, RngSeed(1)).is_err());
        assert!(make_folds(10, 11, RngSeed(1)).is_err());
        let uneven = make_folds(11, 3, RngSeed(9)).unwrap();
        let mut sizes: Vec<usize> = uneven.folds().iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![3, 4, 4]);
    }

    #[test]
    fn user_plans_validated() {
        assert!(FoldPlan::user_supplied(vec![vec![0, 1], vec![2]], 3).is_ok());
        assert!(FoldPlan::user_supplied(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(FoldPlan::user_supplied(vec![vec![0, 1]], 3).is_err());
        assert!(FoldPlan::user_supplied(vec![vec![0, 1, 2], vec![]], 3).is_err());
        assert!(FoldPlan::user_supplied(vec![vec![0, 5], vec![1, 2]], 3).is_err());
    }

    #[test]
    fn dead_zone_on_a_line() {
        let ds = line_ds();
        let idx = SpatialIndex::build(&ds);
        let s = dead_zone_filter(&ds, &idx, &[2], 15.0);
        assert_eq!(s.removed, vec![1, 3]);
        assert_eq!(s.training, vec![0, 4]);
        let s0 = dead_zone_filter(&ds, &idx, &[2], 0.0);
        assert!(s0.removed.is_empty());
        assert_eq!(s0.training, vec![0, 1, 3, 4]);
        let all = dead_zone_filter(&ds, &idx, &[0, 1, 2, 3, 4], 5.0);
        assert!(all.training.is_empty() && all.removed.is_empty());
    }

    #[test]
    fn sloo_k1_predicts_nearest_feature_neighbor() {
        let rows = vec![
            (Coord::new(0.0, 0.0), vec![0.0], 10.0),
            (Coord::new(100.0, 0.0), vec![1.0], 20.0),
            (Coord::new(200.0, 0.0), vec![5.0], 30.0),
            (Coord::new(300.0, 0.0), vec![5.5], 40.0),
        ];
        let ds = GeoDataset::new(vec!["f".into()], ResponseKind::Continuous, rows).unwrap();
        let run = run_skcv(&ds, &FoldPlan::leave_one_out(4), 0.0, &ModelConfig::regression(1)).unwrap();
        assert_eq!(run.predictions, vec![Some(20.0), Some(10.0), Some(40.0), Some(30.0)]);
    }

    #[test]
    fn exhausted_dead_zone_errors_and_strict_mode() {
        let ds = line_ds();
        let model = ModelConfig::regression(2);
        match run_skcv(&ds, &FoldPlan::leave_one_out(5), 100.0, &model) {
            Err(Error::DeadZoneExhaustsData { .. }) => {}
            other => panic!("{other:?}"),
        }
        // r = 15 leaves fold {0} with training {2,3,4} but fold {2} with {0,4}.
        let run = run_skcv(&ds, &FoldPlan::leave_one_out(5), 15.0, &ModelConfig::regression(3)).unwrap();
        assert_eq!(run.skipped_folds(), 3);
        assert!(run.predictions[0].is_some() && run.predictions[2].is_none());
        let cv = CrossValidator::new(&ds, ModelConfig::regression(3)).unwrap().strict(true);
        assert!(matches!(cv.skcv(&FoldPlan::leave_one_out(5), 15.0), Err(Error::StrictSkip { .. })));
    }

    #[test]
    fn rlo_matches_counts() {
        let ds = line_ds();
        let plan = FoldPlan::leave_one_out(5);
        let model = ModelConfig::regression(1);
        let a = run_skcv(&ds, &plan, 15.0, &model).unwrap();
        let b = run_skcv_rlo(&ds, &plan, 15.0, &model, RngSeed(3)).unwrap();
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.removed_ids.len(), y.removed_ids.len());
            assert!(!y.removed_ids.iter().any(|id| plan.folds()[y.fold].contains(id)));
        }
    }

    #[test]
    fn supplied_scheme_survives_subsampling() {
        let ds = line_ds();
        let scheme = FoldScheme::Supplied(vec![vec![0, 1], vec![2, 3, 4]]);
        let sub = ds.subset(&[1, 3, 4]).unwrap();
        let plan = scheme.plan_for(&sub, RngSeed(0)).unwrap();
        assert_eq!(plan.folds(), &[vec![0], vec![1, 2]]);
    }

    #[test]
    fn radii_validated() {
        assert!(DeadZoneSpec::new(vec![]).is_err());
        assert!(DeadZoneSpec::new(vec![0.0, 0.0]).is_err());
        assert!(DeadZoneSpec::new(vec![-1.0]).is_err());
        assert!(DeadZoneSpec::new(vec![0.0, 5.0]).is_ok());
    }
}
