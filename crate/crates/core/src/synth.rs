//! Synthetic spatially autocorrelated datasets with a known covariance.
//!
//! Responses are a zero-mean Gaussian random field realized through a dense
//! Cholesky factorization of the covariance matrix, so generation is exact
//! but limited to desk scale (a few thousand points).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{spatial_distance, Coord, GeoDataset, ResponseKind, RngSeed};
use crate::error::{Error, Result};
use crate::planner::Rect;
use crate::predict::Task;

/// Largest point count accepted for dense factorization.
pub const MAX_POINTS: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModel {
    /// `σ²·exp(-h/ρ)`
    Exponential,
    /// `σ²·exp(-(h/ρ)²)`
    GaussianCov,
    /// Spatially white: every record independent with variance `σ² + nugget`.
    NuggetOnly,
}

/// Spatial structure of the per-feature noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureNoise {
    /// Independent draw per record.
    White,
    /// Independent realization of the response's own covariance model per
    /// feature, scaled to variance `feature_noise²`.
    Correlated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub area: Rect,
    pub n_points: usize,
    pub model: CovarianceModel,
    /// Partial sill σ².
    pub sill: f64,
    /// Range parameter ρ in meters.
    pub range: f64,
    pub nugget: f64,
    pub n_features: usize,
    /// Standard deviation of the noise added to the response in each feature.
    pub feature_noise: f64,
    pub noise: FeatureNoise,
    pub seed: RngSeed,
    pub task: Task,
    /// Number of equal-probability classes (classification only).
    pub n_classes: usize,
}

impl FieldSpec {
    /// Exponential regression field over `area` with unit sill, no nugget and
    /// ten features carrying spatially correlated noise.
    pub fn exponential(area: Rect, n_points: usize, range: f64, seed: RngSeed) -> Self {
        Self {
            area,
            n_points,
            model: CovarianceModel::Exponential,
            sill: 1.0,
            range,
            nugget: 0.0,
            n_features: 10,
            feature_noise: 2.0,
            noise: FeatureNoise::Correlated,
            seed,
            task: Task::Regression,
            n_classes: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.sill > 0.0) {
            return bad(format!("sill must be positive, got {}", self.sill));
        }
        if !(self.range > 0.0) {
            return bad(format!("range must be positive, got {}", self.range));
        }
        if !(self.nugget >= 0.0) {
            return bad(format!("nugget must be non-negative, got {}", self.nugget));
        }
        if !(self.feature_noise >= 0.0) {
            return bad(format!("feature noise must be non-negative, got {}", self.feature_noise));
        }
        if self.n_points < 2 || self.n_points > MAX_POINTS {
            return bad(format!("n_points must be in [2, {MAX_POINTS}], got {}", self.n_points));
        }
        if self.task == Task::Classification && self.n_classes < 2 {
            return bad("classification needs at least 2 classes".into());
        }
        Ok(())
    }

    /// Covariance at separation `h > 0`, excluding the nugget.
    fn covariance(&self, h: f64) -> f64 {
        match self.model {
            CovarianceModel::Exponential => self.sill * (-h / self.range).exp(),
            CovarianceModel::GaussianCov => self.sill * (-(h / self.range).powi(2)).exp(),
            CovarianceModel::NuggetOnly => 0.0,
        }
    }

    pub fn total_variance(&self) -> f64 {
        self.sill + self.nugget
    }
}

/// Closed-form semivariogram of the generating process.
pub fn theoretical_variogram(spec: &FieldSpec, h: f64) -> f64 {
    if h <= 0.0 {
        return spec.nugget;
    }
    spec.nugget + spec.sill - spec.covariance(h)
}

/// Lower Cholesky factor of the (unit-variance-free) covariance matrix.
fn factorize(spec: &FieldSpec, coords: &[Coord]) -> Result<DMatrix<f64>> {
    let m = coords.len();
    let cov = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            spec.sill + spec.nugget
        } else {
            spec.covariance(spatial_distance(coords[i], coords[j]))
        }
    });
    cov.cholesky().map(|c| c.l()).ok_or(Error::Factorization)
}

fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn generate_field(spec: &FieldSpec) -> Result<GeoDataset> {
    spec.validate()?;
    let mut rng = spec.seed.rng();
    let (w, h) = (spec.area.width(), spec.area.height());
    let coords: Vec<Coord> = (0..spec.n_points)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            Coord::new(spec.area.min.x + u * w, spec.area.min.y + v * h)
        })
        .collect();

    let factor = match spec.model {
        CovarianceModel::NuggetOnly => None,
        _ => Some(factorize(spec, &coords)?),
    };
    let sd = spec.total_variance().sqrt();
    // One field realization with the response's covariance, unit-free.
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        let z = normals(rng, spec.n_points);
        match &factor {
            Some(l) => (l * DVector::from_vec(z)).data.into(),
            None => z.into_iter().map(|v| v * sd).collect(),
        }
    };
    let latent = draw(&mut rng);

    let mut features = vec![Vec::with_capacity(spec.n_features); spec.n_points];
    for _ in 0..spec.n_features {
        let noise: Vec<f64> = match spec.noise {
            FeatureNoise::White => normals(&mut rng, spec.n_points),
            FeatureNoise::Correlated => draw(&mut rng).into_iter().map(|v| v / sd).collect(),
        };
        for (i, row) in features.iter_mut().enumerate() {
            row.push(latent[i] + spec.feature_noise * noise[i]);
        }
    }

    let (responses, kind) = match spec.task {
        Task::Regression => (latent, ResponseKind::Continuous),
        Task::Classification => {
            let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let cuts: Vec<f64> =
                (1..spec.n_classes).map(|c| normal.inverse_cdf(c as f64 / spec.n_classes as f64)).collect();
            let labels = latent.iter().map(|&v| cuts.iter().filter(|&&c| c <= v).count() as f64).collect();
            (labels, ResponseKind::Categorical)
        }
    };

    let names = (1..=spec.n_features).map(|i| format!("f{i}")).collect();
    let rows = coords.into_iter().zip(features).zip(responses).map(|((c, f), y)| (c, f, y)).collect();
    Ok(GeoDataset::new(names, kind, rows)?.with_crs_note("synthetic planar meters"))
}
