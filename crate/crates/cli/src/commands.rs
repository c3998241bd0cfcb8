use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use skcv_core::data::write_csv;
use skcv_core::diagnostics::EFFECTIVE_RANGE_FRACTION;
use skcv_core::planner::{radius_for_target, realize_sites};
use skcv_core::{
    fit_sill_range, generate_field, hex_lattice, load_csv, morans_i, pairwise_bias_variance, semivariogram,
    sweep, ColumnSchema, CovarianceModel, CurvePoint, DeadZoneSpec, EvaluationCurve, FeatureNoise, FieldSpec,
    FoldScheme, GeoDataset, LagGrid, MetricKind, ModelConfig, PairsConfig, Rect, RngSeed, StandardizeScope,
    SweepConfig, SweepMode, Task,
};

use crate::args::{
    Common, CurveArgs, DiagnoseArgs, MetricArg, ModelArgs, ModelKindArg, NoiseArg, PairsArgs, PlanArgs, ScopeArg,
    SynthArgs, TaskArg,
};

/// What a finished command leaves behind for the manifest.
pub struct Outcome {
    pub outputs: Vec<String>,
    pub skip_log: Value,
}

impl Outcome {
    fn files(outputs: Vec<String>) -> Self {
        Self { outputs, skip_log: json!([]) }
    }
}

pub fn load_dataset(common: &Common) -> Result<GeoDataset> {
    let data = common.data.as_ref().context("--data is required for this command")?;
    let schema = match &common.schema {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading schema {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing schema {}", p.display()))?
        }
        None => ColumnSchema::default(),
    };
    Ok(load_csv(data, &schema)?)
}

fn num(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().with_context(|| format!("'{s}' is not a number"))
}

/// `a,b,c` or inclusive `start:stop:step`.
pub fn parse_radii(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                bail!("radius range {s} needs step > 0 and stop >= start");
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + i as f64 * step).collect())
        }
        [_] => parse_list(s),
        _ => bail!("radii must be a comma list or start:stop:step, got {s}"),
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(num).collect()
}

fn parse_area(s: &str) -> Result<Rect> {
    let v = parse_list(s)?;
    let [x0, y0, x1, y1] = v[..] else {
        bail!("area must be xmin,ymin,xmax,ymax, got {s}");
    };
    Ok(Rect::new(skcv_core::Coord::new(x0, y0), skcv_core::Coord::new(x1, y1))?)
}

fn area_or_bounds(area: &Option<String>, ds: Option<&GeoDataset>) -> Result<Rect> {
    match (area, ds) {
        (Some(a), _) => parse_area(a),
        (None, Some(ds)) => Ok(Rect::bounding(ds)?),
        (None, None) => bail!("either --area or --data is required"),
    }
}

/// Count, `loo`, or a CSV with `id,fold` rows.
fn parse_folds(s: &str) -> Result<FoldScheme> {
    if s.eq_ignore_ascii_case("loo") {
        return Ok(FoldScheme::LeaveOneOut);
    }
    if let Ok(k) = s.parse::<usize>() {
        return Ok(FoldScheme::KFold(k));
    }
    let mut rdr = csv::Reader::from_path(s).with_context(|| format!("reading fold file {s}"))?;
    let mut groups: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).and_then(|v| v.trim().parse().ok()).with_context(|| format!("{s}: bad id on row {}", n + 1))?;
        let fold = rec.get(1).with_context(|| format!("{s}: missing fold on row {}", n + 1))?;
        groups.entry(fold.trim().to_string()).or_default().push(id);
    }
    Ok(FoldScheme::Supplied(groups.into_values().collect()))
}

fn model_config(m: &ModelArgs) -> ModelConfig {
    ModelConfig {
        k: m.k,
        task: match m.task {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        },
        standardize: match m.standardize {
            ScopeArg::Fold => StandardizeScope::Fold,
            ScopeArg::Global => StandardizeScope::Global,
        },
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

fn density_suffix(fraction: f64, n: usize) -> String {
    if n == 1 {
        String::new()
    } else {
        format!("_density_{fraction}")
    }
}

pub fn synth(a: &SynthArgs, out: &Path) -> Result<Outcome> {
    let area = Rect::new(skcv_core::Coord::new(0.0, 0.0), skcv_core::Coord::new(a.width, a.height))?;
    let mut spec = FieldSpec::exponential(area, a.points, a.range, RngSeed(a.common.seed));
    spec.model = match a.model {
        ModelKindArg::Exponential => CovarianceModel::Exponential,
        ModelKindArg::Gaussian => CovarianceModel::GaussianCov,
        ModelKindArg::Nugget => CovarianceModel::NuggetOnly,
    };
    spec.sill = a.sill;
    spec.nugget = a.nugget;
    spec.n_features = a.features;
    spec.feature_noise = a.feature_noise;
    spec.noise = match a.noise {
        NoiseArg::White => FeatureNoise::White,
        NoiseArg::Correlated => FeatureNoise::Correlated,
    };
    spec.task = match a.task {
        TaskArg::Regression => Task::Regression,
        TaskArg::Classification => Task::Classification,
    };
    spec.n_classes = a.classes;
    let ds = generate_field(&spec)?;
    let schema = ColumnSchema { response_kind: ds.response_kind(), ..ColumnSchema::default() };
    let points = out.join("points.csv");
    write_csv(&ds, File::create(&points).with_context(|| format!("writing {}", points.display()))?, &schema)?;
    write_json(&out.join("field_spec.json"), &spec)?;
    write_json(&out.join("schema.json"), &schema)?;
    Ok(Outcome::files(vec!["points.csv".into(), "field_spec.json".into(), "schema.json".into()]))
}

pub fn diagnose(a: &DiagnoseArgs, out: &Path) -> Result<Outcome> {
    let ds = load_dataset(&a.common)?;
    let lags = LagGrid::uniform(a.lag_first, a.lag_step, a.lag_count, a.tolerance.unwrap_or(a.lag_step / 2.0))?;
    let v = semivariogram(&ds, &lags)?;
    let c = morans_i(&ds, &lags)?;
    let mut w = csv_writer(&out.join("diagnostics.csv"))?;
    w.write_record(["lag_center", "gamma", "pair_count", "moran_i"])?;
    for (vb, cb) in v.bins.iter().zip(&c.bins) {
        w.write_record([vb.lag_center.to_string(), opt(vb.gamma), vb.pair_count.to_string(), opt(cb.moran_i)])?;
    }
    w.flush()?;
    let fit = fit_sill_range(&v)?;
    let range = fit.effective_range.is_finite().then_some(fit.effective_range);
    write_json(
        &out.join("summary.json"),
        &json!({
            "records": ds.len(),
            "sill": fit.sill,
            "effective_range": range,
            "effective_range_fraction": EFFECTIVE_RANGE_FRACTION,
            "moran_baseline": c.baseline,
            "lag_tolerance": lags.tolerance(),
        }),
    )?;
    Ok(Outcome::files(vec!["diagnostics.csv".into(), "summary.json".into()]))
}

pub fn write_curve(path: &Path, curve: &EvaluationCurve) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["r_delta", "metric", "mean_removed", "skipped_folds"])?;
    for p in &curve.points {
        w.write_record([p.r_delta.to_string(), opt(p.metric), p.mean_removed.to_string(), p.skipped_folds.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn curve(a: &CurveArgs, mode: SweepMode, out: &Path) -> Result<Outcome> {
    let ds = load_dataset(&a.common)?;
    let cfg = SweepConfig {
        radii: DeadZoneSpec::new(parse_radii(&a.radii)?)?,
        densities: parse_list(&a.densities)?,
        mode,
        folds: parse_folds(&a.folds)?,
        model: model_config(&a.model),
        strict: a.strict,
        seed: RngSeed(a.common.seed),
    };
    let curves = sweep(&ds, &cfg)?;
    let mut outputs = Vec::new();
    let mut skips = Vec::new();
    for c in &curves {
        let name = format!("curve{}.csv", density_suffix(c.density_fraction, curves.len()));
        write_curve(&out.join(&name), c)?;
        outputs.push(name);
        skips.push(json!({ "density_fraction": c.density_fraction, "events": c.skip_log }));
    }
    Ok(Outcome { outputs, skip_log: Value::Array(skips) })
}

fn read_curve(path: &PathBuf, kind: MetricKind) -> Result<EvaluationCurve> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading curve {}", path.display()))?;
    let mut points = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let parse = |s: &str| num(s).with_context(|| format!("{}: row {}", path.display(), n + 1));
        points.push(CurvePoint {
            r_delta: parse(field(0))?,
            metric: if field(1).is_empty() { None } else { Some(parse(field(1))?) },
            mean_removed: if field(2).is_empty() { 0.0 } else { parse(field(2))? },
            skipped_folds: field(3).parse().unwrap_or(0),
        });
    }
    Ok(EvaluationCurve { density_fraction: 1.0, metric_kind: kind, points, skip_log: Vec::new() })
}

pub fn plan(a: &PlanArgs, out: &Path) -> Result<Outcome> {
    let ds = a.common.data.as_ref().map(|_| load_dataset(&a.common)).transpose()?;
    let area = area_or_bounds(&a.area, ds.as_ref())?;
    let kind = match a.metric {
        MetricArg::Rmse => MetricKind::Rmse,
        MetricArg::Accuracy => MetricKind::Accuracy,
    };
    let radius = match (a.radius, &a.curve, a.target) {
        (Some(r), _, _) => r,
        (None, Some(path), Some(target)) => radius_for_target(&read_curve(path, kind)?, target)?,
        _ => bail!("give --radius, or --curve with --target"),
    };
    let plan = hex_lattice(&area, radius)?;
    let mut w = csv_writer(&out.join("sites.csv"))?;
    w.write_record(["x", "y"])?;
    for s in &plan.sites {
        w.write_record([s.x.to_string(), s.y.to_string()])?;
    }
    w.flush()?;
    let realized = ds.as_ref().map(|d| realize_sites(d, &plan).len());
    write_json(
        &out.join("plan.json"),
        &json!({
            "area": plan.area,
            "covering_radius": plan.covering_radius,
            "lattice_spacing": plan.lattice_spacing,
            "site_count": plan.sites.len(),
            "realized_training_records": realized,
            "target": a.target,
        }),
    )?;
    Ok(Outcome::files(vec!["sites.csv".into(), "plan.json".into()]))
}

pub fn pairs(a: &PairsArgs, out: &Path) -> Result<Outcome> {
    let ds = load_dataset(&a.common)?;
    let cfg = PairsConfig {
        area: area_or_bounds(&a.area, Some(&ds))?,
        grid: a.grid,
        radii: DeadZoneSpec::new(parse_radii(&a.radii)?)?,
        densities: parse_list(&a.densities)?,
        folds: parse_folds(&a.folds)?,
        model: model_config(&a.model),
        seed: RngSeed(a.common.seed),
    };
    let summaries = pairwise_bias_variance(&ds, &cfg)?;
    let mut outputs = Vec::new();
    let mut skips = Vec::new();
    for s in &summaries {
        let name = format!("pairs{}.csv", density_suffix(s.density_fraction, summaries.len()));
        let mut w = csv_writer(&out.join(&name))?;
        w.write_record(["r_delta", "mean_diff", "std_diff", "pair_count"])?;
        for r in &s.rows {
            w.write_record([r.r_delta.to_string(), opt(r.mean_diff), opt(r.std_diff), r.pair_count.to_string()])?;
        }
        w.flush()?;
        outputs.push(name);
        skips.push(json!({ "density_fraction": s.density_fraction, "events": s.skipped }));
    }
    Ok(Outcome { outputs, skip_log: Value::Array(skips) })
}
