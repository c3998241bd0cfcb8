//! Spatial model evaluation: spatial k-fold cross validation (SKCV), its
//! leave-one-out and random-leave-out variants, spatial autocorrelation
//! diagnostics, feature-space kNN predictors and hexagonal sampling plans.

pub mod cv;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod index;
pub mod planner;
pub mod predict;
pub mod synth;

pub use cv::{
    dead_zone_filter, make_folds, run_skcv, run_skcv_rlo, sweep, CrossValidator, CurvePoint, CvRun, DeadZoneSpec,
    EvaluationCurve, FoldOutcome, FoldPlan, FoldScheme, SweepConfig, SweepMode,
};
pub use data::{load_csv, spatial_distance, subsample_density, ColumnSchema, Coord, GeoDataset, PointRecord, ResponseKind, RngSeed};
pub use diagnostics::{fit_sill_range, morans_i, semivariogram, CorrelogramEstimate, LagGrid, VariogramEstimate};
pub use error::{Error, Result};
pub use index::SpatialIndex;
pub use planner::{hex_lattice, pairwise_bias_variance, partition_grid, sample_generalize, PairsConfig, Rect, SamplingPlan};
pub use predict::{accuracy, fit_standardizer, rmse, KnnModel, MetricKind, ModelConfig, StandardizeScope, Task};
pub use synth::{generate_field, theoretical_variogram, CovarianceModel, FeatureNoise, FieldSpec};
