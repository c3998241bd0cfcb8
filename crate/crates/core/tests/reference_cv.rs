//! SKCV against independently written CV, leave-one-out and
//! sample-generalize implementations.

mod common;

use std::collections::BTreeMap;

use common::random_dataset;
use skcv_core::planner::realize_sites;
use skcv_core::{
    hex_lattice, make_folds, run_skcv, sample_generalize, spatial_distance, Coord, FoldPlan, GeoDataset,
    ModelConfig, Rect, ResponseKind, RngSeed, StandardizeScope, Task,
};

/// Z-scores columns on `train` the plain way: population sd, constant
/// columns map to zero.
fn zscore(ds: &GeoDataset, train: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let dim = ds.feature_dim();
    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut sd = vec![0.0; dim];
    for j in 0..dim {
        let col: Vec<f64> = train.iter().map(|&i| ds.record(i).features[j]).collect();
        let constant = col.iter().all(|&v| v == col[0]);
        let m = col.iter().sum::<f64>() / n;
        if constant {
            mean[j] = col[0];
        } else {
            mean[j] = m;
            sd[j] = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
        }
    }
    (mean, sd)
}

fn z(x: &[f64], mean: &[f64], sd: &[f64]) -> Vec<f64> {
    x.iter().zip(mean.iter().zip(sd)).map(|(&v, (&m, &s))| if s == 0.0 { 0.0 } else { (v - m) / s }).collect()
}

/// Neighbour ids of `x` among `train`, ranked by squared feature distance
/// then id.
fn ranked(ds: &GeoDataset, train: &[usize], mean: &[f64], sd: &[f64], x: &[f64], k: usize) -> Vec<(f64, usize)> {
    let q = z(x, mean, sd);
    let mut d: Vec<(f64, usize)> = train
        .iter()
        .map(|&i| {
            let t = z(&ds.record(i).features, mean, sd);
            (t.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i)
        })
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    d.truncate(k);
    d
}

fn reference_knn(ds: &GeoDataset, train: &[usize], x: &[f64], k: usize, task: Task) -> f64 {
    let (mean, sd) = zscore(ds, train);
    let nb = ranked(ds, train, &mean, &sd, x, k);
    match task {
        Task::Regression => nb.iter().map(|&(_, i)| ds.record(i).response).sum::<f64>() / k as f64,
        Task::Classification => {
            let mut votes: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
            for &(d, i) in &nb {
                let e = votes.entry(ds.record(i).label()).or_insert((0, d));
                e.0 += 1;
            }
            let top = votes.values().map(|v| v.0).max().unwrap();
            let mut best: Option<(f64, u32)> = None;
            for (&label, &(count, first)) in &votes {
                if count == top && best.is_none_or(|(d, _)| first < d) {
                    best = Some((first, label));
                }
            }
            best.unwrap().1 as f64
        }
    }
}

/// Textbook k-fold CV with no spatial handling at all.
fn reference_cv(ds: &GeoDataset, folds: &[Vec<usize>], k: usize, task: Task) -> Vec<f64> {
    let mut out = vec![f64::NAN; ds.len()];
    for fold in folds {
        let train: Vec<usize> = (0..ds.len()).filter(|i| !fold.contains(i)).collect();
        for &t in fold {
            out[t] = reference_knn(ds, &train, &ds.record(t).features, k, task);
        }
    }
    out
}

#[test]
fn zero_radius_is_standard_cv_bit_for_bit() {
    for trial in 0..20u64 {
        let kind = if trial % 4 == 3 { ResponseKind::Categorical } else { ResponseKind::Continuous };
        // Snapped coordinates produce co-located records, which r_delta = 0
        // would remove; keep them distinct here.
        let ds = random_dataset(1000 + trial, 60 + trial as usize * 3, 500.0, 3, false, kind);
        let task = if kind == ResponseKind::Categorical { Task::Classification } else { Task::Regression };
        let model = ModelConfig { k: 1 + trial as usize % 9, task, standardize: StandardizeScope::Fold };
        let plan = make_folds(ds.len(), 2 + trial as usize % 9, RngSeed(trial)).unwrap();
        let run = run_skcv(&ds, &plan, 0.0, &model).unwrap();
        let want = reference_cv(&ds, plan.folds(), model.k, task);
        for (id, (got, want)) in run.predictions.iter().zip(&want).enumerate() {
            assert_eq!(got.unwrap().to_bits(), want.to_bits(), "trial {trial} id {id}");
        }
    }
}

#[test]
fn singleton_folds_equal_dedicated_leave_one_out() {
    for (seed, r) in [(1u64, 0.0), (2, 15.0), (3, 60.0)] {
        let ds = random_dataset(seed, 150, 400.0, 2, seed == 2, ResponseKind::Continuous);
        let model = ModelConfig::regression(5);
        let k_eq_m = make_folds(ds.len(), ds.len(), RngSeed(seed)).unwrap();
        let loo = FoldPlan::leave_one_out(ds.len());
        let a = run_skcv(&ds, &k_eq_m, r, &model).unwrap();
        let b = run_skcv(&ds, &loo, r, &model).unwrap();
        let bits = |v: &[Option<f64>]| v.iter().map(|p| p.map(f64::to_bits)).collect::<Vec<_>>();
        assert_eq!(bits(&a.predictions), bits(&b.predictions));
    }
}

#[test]
fn dead_zone_predictions_match_reference_on_filtered_training() {
    let ds = random_dataset(77, 120, 300.0, 2, true, ResponseKind::Continuous);
    let model = ModelConfig::regression(4);
    let plan = make_folds(ds.len(), 6, RngSeed(8)).unwrap();
    let r = 25.0;
    let run = run_skcv(&ds, &plan, r, &model).unwrap();
    for fold in plan.folds() {
        let train: Vec<usize> = (0..ds.len())
            .filter(|&j| {
                !fold.contains(&j)
                    && fold.iter().all(|&t| spatial_distance(ds.record(t).coord, ds.record(j).coord) > r)
            })
            .collect();
        for &t in fold {
            let want = reference_knn(&ds, &train, &ds.record(t).features, 4, Task::Regression);
            assert_eq!(run.predictions[t].unwrap().to_bits(), want.to_bits());
        }
    }
}

#[test]
fn sample_generalize_matches_hand_built_split() {
    let ds = random_dataset(20, 20, 100.0, 2, false, ResponseKind::Continuous);
    let area = Rect::new(Coord::new(0.0, 0.0), Coord::new(100.0, 100.0)).unwrap();
    let r = 30.0;
    let plan = hex_lattice(&area, r).unwrap();
    // Nearest record per site by full scan, ties to the lower id.
    let mut train: Vec<usize> = plan
        .sites
        .iter()
        .map(|&s| {
            (0..ds.len())
                .min_by(|&a, &b| {
                    spatial_distance(ds.record(a).coord, s)
                        .total_cmp(&spatial_distance(ds.record(b).coord, s))
                        .then(a.cmp(&b))
                })
                .unwrap()
        })
        .collect();
    train.sort();
    train.dedup();
    assert_eq!(realize_sites(&ds, &plan), train);

    let k = 3.min(train.len());
    let test: Vec<usize> = (0..ds.len()).filter(|i| !train.contains(i)).collect();
    let ss: f64 = test
        .iter()
        .map(|&t| {
            let p = reference_knn(&ds, &train, &ds.record(t).features, k, Task::Regression);
            (p - ds.record(t).response).powi(2)
        })
        .sum();
    let want = (ss / test.len() as f64).sqrt();
    let got = sample_generalize(&ds, &area, r, &ModelConfig::regression(k)).unwrap();
    assert_eq!(got.to_bits(), want.to_bits());
}

#[test]
fn classification_mode_with_nine_neighbours() {
    for seed in 0..10u64 {
        let ds = random_dataset(300 + seed, 90, 200.0, 2, false, ResponseKind::Categorical);
        let plan = make_folds(ds.len(), 5, RngSeed(seed)).unwrap();
        let run = run_skcv(&ds, &plan, 0.0, &ModelConfig::classification(9)).unwrap();
        let want = reference_cv(&ds, plan.folds(), 9, Task::Classification);
        for (got, want) in run.predictions.iter().zip(&want) {
            assert_eq!(got.unwrap(), *want);
        }
    }
}
