//! Feature-space k-nearest-neighbor models and the two performance metrics.
//!
//! Neighbors are ranked by squared Euclidean distance between z-scored
//! feature vectors (never by spatial distance), ties broken by ascending
//! training record id. Regression averages the neighbor responses in rank
//! order; classification takes the mode.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::PointRecord;
use crate::error::{Error, Result};

/// Per-feature z-score parameters fitted on a training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    /// Population standard deviation; 0 for constant features.
    pub stddev: Vec<f64>,
}

impl StandardizationParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Indices of features with zero spread in the training data.
    pub fn constant_features(&self) -> Vec<usize> {
        self.stddev.iter().enumerate().filter(|(_, &s)| s == 0.0).map(|(i, _)| i).collect()
    }

    /// `(x - mean) / stddev` per feature; constant features map to 0.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.transform_unchecked(x))
    }

    fn transform_unchecked(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.stddev))
            .map(|(&v, (&m, &s))| if s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }
}

/// Fits mean and population stddev over the given training records only.
pub fn fit_standardizer(train: &[&PointRecord]) -> Result<StandardizationParams> {
    let first = train.first().ok_or_else(|| Error::Empty("no training records".into()))?;
    let dim = first.features.len();
    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut stddev = vec![0.0; dim];
    for j in 0..dim {
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for r in train {
            if r.features.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.features.len() });
            }
            let v = r.features[j];
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        if lo == hi {
            // Exact for constant columns; sum / n can drift by an ulp.
            mean[j] = lo;
            continue;
        }
        let m = sum / n;
        let ss: f64 = train.iter().map(|r| (r.features[j] - m) * (r.features[j] - m)).sum();
        mean[j] = m;
        stddev[j] = (ss / n).sqrt();
    }
    Ok(StandardizationParams { mean, stddev })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// Which records the z-score statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardizeScope {
    /// Training partition of each fold (leakage free).
    Fold,
    /// Whole dataset, computed once.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub k: usize,
    pub task: Task,
    pub standardize: StandardizeScope,
}

impl ModelConfig {
    pub fn regression(k: usize) -> Self {
        Self { k, task: Task::Regression, standardize: StandardizeScope::Fold }
    }

    pub fn classification(k: usize) -> Self {
        Self { k, task: Task::Classification, standardize: StandardizeScope::Fold }
    }

    pub fn metric(&self) -> MetricKind {
        match self.task {
            Task::Regression => MetricKind::Rmse,
            Task::Classification => MetricKind::Accuracy,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::regression(9)
    }
}

/// A fitted kNN model: standardized training features plus responses.
#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    task: Task,
    params: StandardizationParams,
    dim: usize,
    /// Row-major standardized features.
    features: Vec<f64>,
    responses: Vec<f64>,
    ids: Vec<usize>,
}

impl KnnModel {
    pub fn fit(
        k: usize,
        task: Task,
        params: StandardizationParams,
        train: &[&PointRecord],
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if k > train.len() {
            return Err(Error::InsufficientCandidates { requested: k, available: train.len() });
        }
        let dim = params.dim();
        let mut features = Vec::with_capacity(train.len() * dim);
        for r in train {
            if r.features.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.features.len() });
            }
            features.extend(params.transform_unchecked(&r.features));
        }
        Ok(Self {
            k,
            task,
            params,
            dim,
            features,
            responses: train.iter().map(|r| r.response).collect(),
            ids: train.iter().map(|r| r.id).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn training_size(&self) -> usize {
        self.responses.len()
    }

    pub fn params(&self) -> &StandardizationParams {
        &self.params
    }

    /// `(squared distance, training row)` of the k nearest rows, in rank
    /// order. `x` is a raw (unstandardized) feature vector.
    fn neighbors(&self, x: &[f64]) -> Result<Vec<(f64, usize)>> {
        let z = self.params.transform(x)?;
        let mut cand: Vec<(f64, usize)> = (0..self.responses.len())
            .map(|row| {
                let t = &self.features[row * self.dim..(row + 1) * self.dim];
                let d: f64 = t.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, row)
            })
            .collect();
        let ids = &self.ids;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(ids[a.1].cmp(&ids[b.1]));
        if self.k < cand.len() {
            cand.select_nth_unstable_by(self.k - 1, cmp);
            cand.truncate(self.k);
        }
        cand.sort_unstable_by(cmp);
        Ok(cand)
    }

    /// Mean response of the k nearest training records.
    pub fn predict_regression(&self, x: &[f64]) -> Result<f64> {
        if self.task != Task::Regression {
            return Err(Error::InvalidArgument("model was fitted for classification".into()));
        }
        let nb = self.neighbors(x)?;
        let sum: f64 = nb.iter().map(|&(_, row)| self.responses[row]).sum();
        Ok(sum / self.k as f64)
    }

    /// Most frequent label among the k nearest. Ties go to the label whose
    /// closest member is nearer, then to the smaller label.
    pub fn predict_classification(&self, x: &[f64]) -> Result<u32> {
        if self.task != Task::Classification {
            return Err(Error::InvalidArgument("model was fitted for regression".into()));
        }
        let nb = self.neighbors(x)?;
        // label -> (count, distance of its nearest member)
        let mut tally: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
        for &(d, row) in &nb {
            let e = tally.entry(self.responses[row] as u32).or_insert((0, d));
            e.0 += 1;
        }
        let best = tally
            .into_iter()
            .min_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.total_cmp(&b.1 .1)).then(a.0.cmp(&b.0)))
            .map(|(label, _)| label)
            .expect("k >= 1");
        Ok(best)
    }

    /// Prediction as a real number regardless of task.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self.task {
            Task::Regression => self.predict_regression(x),
            Task::Classification => self.predict_classification(x).map(f64::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Rmse,
    Accuracy,
}

impl MetricKind {
    pub fn score(self, predicted: &[f64], actual: &[f64]) -> Result<f64> {
        match self {
            MetricKind::Rmse => rmse(predicted, actual),
            MetricKind::Accuracy => {
                let p: Vec<u32> = predicted.iter().map(|&v| v as u32).collect();
                let a: Vec<u32> = actual.iter().map(|&v| v as u32).collect();
                accuracy(&p, &a)
            }
        }
    }

    /// Whether `value` is at least as good as `target`.
    pub fn meets(self, value: f64, target: f64) -> bool {
        match self {
            MetricKind::Rmse => value <= target,
            MetricKind::Accuracy => value >= target,
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: b, got: a });
    }
    if a == 0 {
        return Err(Error::Empty("metric over zero predictions".into()));
    }
    Ok(())
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(predicted.len(), actual.len())?;
    let ss: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((ss / predicted.len() as f64).sqrt())
}

pub fn accuracy(predicted: &[u32], actual: &[u32]) -> Result<f64> {
    check_lengths(predicted.len(), actual.len())?;
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Coord;

    fn rec(id: usize, features: Vec<f64>, response: f64) -> PointRecord {
        PointRecord { id, source_id: id, coord: Coord::new(id as f64, 0.0), features, response }
    }

    #[test]
    fn standardizer_examples() {
        let rs = [rec(0, vec![1.0], 0.0), rec(1, vec![2.0], 0.0), rec(2, vec![3.0], 0.0)];
        let refs: Vec<&PointRecord> = rs.iter().collect();
        let p = fit_standardizer(&refs).unwrap();
        assert_eq!(p.mean, vec![2.0]);
        assert!((p.stddev[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);

        let single = fit_standardizer(&[&rs[1]]).unwrap();
        assert_eq!((single.mean[0], single.stddev[0]), (2.0, 0.0));

        let twins = [rec(0, vec![0.1, 5.0], 0.0), rec(1, vec![0.1, 6.0], 0.0), rec(2, vec![0.1, 7.0], 0.0)];
        let p = fit_standardizer(&twins.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(p.stddev[0], 0.0);
        assert_eq!(p.constant_features(), vec![0]);
        assert!(fit_standardizer(&[]).is_err());
    }

    #[test]
    fn transform_examples() {
        let p = StandardizationParams { mean: vec![2.0, 7.0], stddev: vec![1.0, 0.0] };
        assert_eq!(p.transform(&[2.0, 7.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(p.transform(&[5.0, -100.0]).unwrap(), vec![3.0, 0.0]);
        assert!(matches!(p.transform(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    fn identity_params(dim: usize) -> StandardizationParams {
        StandardizationParams { mean: vec![0.0; dim], stddev: vec![1.0; dim] }
    }

    #[test]
    fn regression_mean_of_nearest() {
        let rs = [
            rec(0, vec![0.0], 1.0),
            rec(1, vec![1.0], 2.0),
            rec(2, vec![2.0], 3.0),
            rec(3, vec![10.0], 100.0),
        ];
        let refs: Vec<&PointRecord> = rs.iter().collect();
        let m = KnnModel::fit(3, Task::Regression, identity_params(1), &refs).unwrap();
        assert_eq!(m.predict_regression(&[1.0]).unwrap(), 2.0);
        let m1 = KnnModel::fit(1, Task::Regression, identity_params(1), &refs).unwrap();
        assert_eq!(m1.predict_regression(&[9.0]).unwrap(), 100.0);
        assert!(KnnModel::fit(5, Task::Regression, identity_params(1), &refs).is_err());
        assert!(m.predict_classification(&[1.0]).is_err());
    }

    #[test]
    fn classification_majority_and_tie_rule() {
        let rs = [rec(0, vec![0.0], 1.0), rec(1, vec![1.0], 1.0), rec(2, vec![2.0], 3.0), rec(3, vec![50.0], 2.0)];
        let refs: Vec<&PointRecord> = rs.iter().collect();
        let m = KnnModel::fit(3, Task::Classification, identity_params(1), &refs).unwrap();
        assert_eq!(m.predict_classification(&[1.0]).unwrap(), 1);

        // labels {2, 3}, the label-3 neighbor is nearer
        let rs = [rec(0, vec![0.0], 2.0), rec(1, vec![3.0], 3.0), rec(2, vec![100.0], 2.0)];
        let refs: Vec<&PointRecord> = rs.iter().collect();
        let m = KnnModel::fit(2, Task::Classification, identity_params(1), &refs).unwrap();
        assert_eq!(m.predict_classification(&[2.0]).unwrap(), 3);
        // equidistant representatives: smaller label wins
        assert_eq!(m.predict_classification(&[1.5]).unwrap(), 2);
    }

    #[test]
    fn feature_ties_break_by_training_id_not_insertion_order() {
        let rs = [rec(5, vec![1.0], 10.0), rec(2, vec![-1.0], 20.0), rec(9, vec![3.0], 30.0)];
        let a: Vec<&PointRecord> = rs.iter().collect();
        let b: Vec<&PointRecord> = rs.iter().rev().collect();
        let ma = KnnModel::fit(1, Task::Regression, identity_params(1), &a).unwrap();
        let mb = KnnModel::fit(1, Task::Regression, identity_params(1), &b).unwrap();
        assert_eq!(ma.predict_regression(&[0.0]).unwrap(), 20.0);
        assert_eq!(mb.predict_regression(&[0.0]).unwrap(), 20.0);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse(&[1.5, 2.5, -0.5], &[1.0, 2.0, -1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 1]).unwrap(), 2.0 / 3.0);
        assert_eq!(accuracy(&[1, 2], &[0, 0]).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
    }
}
