//! Config-driven benchmark runs: load, split, preprocess, represent, fit,
//! predict, evaluate, and write report artifacts. Also merges reports from
//! separate runs into one comparison table.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{self, sha256_hex, Dataset, SplitAssignment, SplitMode, SplitSpec, SplitTag};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_classification, evaluate_regression, report_table, EvalReport, RegressionReport};
use crate::irregularity::irregularity_from_slice;
use crate::models::{
    load_external_predictions, BaselineMode, BaselineModel, Gpr, GprConfig, LogisticRegressor, Loss, MiniRocket, Mlp,
    MlpConfig, RidgeRegressor,
};
use crate::morph::segment_features_slice;
use crate::signal::{preprocess_slice, Labels, Task};
use crate::transforms::{cwt_features, wpd_slice, CwtPlan, WPD_LEVEL};

pub const DATA_ENV: &str = "PULSEBENCH_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchTask {
    /// BP regression, subjects shared between splits.
    BpCalib,
    /// BP regression, subject-disjoint splits.
    BpCalibfree,
    /// AF classification, stratified subject-disjoint splits.
    Af,
}

impl BenchTask {
    pub fn signal_task(self) -> Task {
        match self {
            BenchTask::BpCalib | BenchTask::BpCalibfree => Task::Bp,
            BenchTask::Af => Task::Af,
        }
    }

    pub fn is_regression(self) -> bool {
        self != BenchTask::Af
    }

    pub fn default_split(self, seed: u64) -> SplitSpec {
        match self {
            BenchTask::BpCalib => SplitSpec::bp_calib(seed),
            BenchTask::BpCalibfree => SplitSpec::bp_calibfree(seed),
            BenchTask::Af => SplitSpec::af(seed),
        }
    }

    fn split_mode(self) -> SplitMode {
        self.default_split(0).mode
    }

    /// Baseline used for MASE: per-subject medians when test subjects were
    /// seen in training, the global median otherwise.
    pub fn baseline_mode(self) -> BaselineMode {
        match self {
            BenchTask::BpCalib => BaselineMode::PerSubject,
            _ => BaselineMode::Global,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// The preprocessed time series.
    Raw,
    /// Segment-median morphology features.
    Cif,
    /// Flattened level-3 wavelet packet coefficients.
    Wavelet,
    /// The seven PP-interval irregularity features.
    Irregularity,
    /// Per-scale mean of the CWT scalogram.
    CwtFeatures,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Cif => "cif",
            Representation::Wavelet => "wavelet",
            Representation::Irregularity => "irregularity",
            Representation::CwtFeatures => "cwt_features",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Mlp,
    MlpGnllMcdropout,
    Gpr,
    MinirocketLinear,
    External,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Mlp => "mlp",
            ModelKind::MlpGnllMcdropout => "mlp_gnll_mcdropout",
            ModelKind::Gpr => "gpr",
            ModelKind::MinirocketLinear => "minirocket_linear",
            ModelKind::External => "external",
        }
    }

    fn uses_signal(self) -> bool {
        !matches!(self, ModelKind::Baseline | ModelKind::External)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `<dataset>.f32` and its manifest. Relative paths
    /// resolve against the data root.
    pub dir: Option<PathBuf>,
    pub dataset: String,
    /// `generate` (default), `manifest`, or a path to a splits JSON file.
    pub splits: Option<String>,
    pub split_fractions: Option<[f64; 3]>,
    /// CSV of `segment_id,prediction[,prediction2]` for the external model.
    pub external_predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub mlp: MlpConfig,
    pub gpr: GprConfig,
    /// Ridge penalties searched on the validation split.
    pub ridge_grid: Option<Vec<f64>>,
    pub logistic_grid: Option<Vec<f64>>,
    pub mc_passes: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            mlp: MlpConfig::default(),
            gpr: GprConfig::default(),
            ridge_grid: None,
            logistic_grid: None,
            mc_passes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: BenchTask,
    pub representation: Representation,
    pub model: ModelKind,
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub hyper: Hyperparameters,
    /// Row name in tables; defaults to `<representation>+<model>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| match self.model {
                ModelKind::Baseline | ModelKind::External => self.model.name().to_string(),
                m => format!("{}+{}", self.representation.name(), m.name()),
            })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Checks the representation × model × task matrix and hyperparameters.
    pub fn validate(&self) -> Result<()> {
        let (rep, model) = (self.representation, self.model);
        let reject = |why: &str| Err(Error::Config(format!("{} with {} representation: {why}", model.name(), rep.name())));
        match model {
            ModelKind::Gpr if rep == Representation::Raw => return reject("gpr requires a feature representation"),
            ModelKind::MinirocketLinear if rep != Representation::Raw => {
                return reject("minirocket_linear requires the raw representation")
            }
            ModelKind::Baseline | ModelKind::MlpGnllMcdropout | ModelKind::Gpr if !self.task.is_regression() => {
                return reject("model is regression-only")
            }
            ModelKind::External if self.data.external_predictions.is_none() => {
                return reject("external model needs data.external_predictions")
            }
            _ => {}
        }
        if self.data.dataset.is_empty() {
            return Err(Error::Config("data.dataset is empty".into()));
        }
        if let Some(f) = self.data.split_fractions {
            SplitSpec::new(self.task.split_mode(), f, self.seed).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.hyper.mlp.validate().map_err(|e| Error::Config(e.to_string()))?;
        if model == ModelKind::MlpGnllMcdropout && self.hyper.mc_passes < 2 {
            return Err(Error::Config("mc_passes must be at least 2".into()));
        }
        let g = &self.hyper.gpr;
        if g.sigma_grid.is_empty() || g.lengthscale_grid.is_empty() || g.noise_grid.is_empty() {
            return Err(Error::Config("gpr grids must be non-empty".into()));
        }
        for grid in [&self.hyper.ridge_grid, &self.hyper.logistic_grid].into_iter().flatten() {
            if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::Config("penalty grids must be non-empty and positive".into()));
            }
        }
        Ok(())
    }

    fn resolve(&self, p: &Path, root: Option<&Path>) -> PathBuf {
        match root {
            Some(r) if p.is_relative() => r.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn data_dir(&self, root: Option<&Path>) -> PathBuf {
        self.resolve(self.data.dir.as_deref().unwrap_or(Path::new(".")), root)
    }
}

/// One run's evaluation with its table label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproRecord {
    pub pulsebench_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub config: RunConfig,
    pub dataset: String,
    pub manifest_sha256: String,
    pub split_counts: BTreeMap<String, usize>,
    /// Segments whose representation failed and were imputed, per split.
    pub imputed_segments: BTreeMap<String, usize>,
    /// Test segments whose subject had no training median.
    pub baseline_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub table: String,
    pub predictions_csv: String,
    pub repro: ReproRecord,
}

impl RunArtifacts {
    /// Writes `report.json`, `table.txt`, `predictions.csv` and `repro.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("report.json", serde_json::to_string_pretty(&self.report)? + "\n"),
            ("table.txt", self.table.clone()),
            ("predictions.csv", self.predictions_csv.clone()),
            ("repro.json", serde_json::to_string_pretty(&self.repro)? + "\n"),
        ];
        for (name, text) in files {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

enum Targets {
    Bp { sbp: Vec<f64>, dbp: Vec<f64> },
    Af(Vec<bool>),
}

fn targets(ds: &Dataset, task: BenchTask) -> Result<Targets> {
    let mut sbp = Vec::new();
    let mut dbp = Vec::new();
    let mut af = Vec::new();
    for s in &ds.segments {
        match (task.is_regression(), s.segment.labels) {
            (true, Some(Labels::Bp { sbp: a, dbp: b })) if a.is_finite() && b.is_finite() => {
                sbp.push(a);
                dbp.push(b);
            }
            (false, Some(Labels::Af { af: v })) => af.push(v),
            _ => return Err(Error::segment(&s.id, format!("missing or invalid labels for {task:?}"))),
        }
    }
    Ok(if task.is_regression() { Targets::Bp { sbp, dbp } } else { Targets::Af(af) })
}

fn resolve_splits(cfg: &RunConfig, ds: &Dataset, root: Option<&Path>) -> Result<SplitAssignment> {
    let assignment = match cfg.data.splits.as_deref() {
        None | Some("generate") => {
            let mut spec = cfg.task.default_split(cfg.seed);
            if let Some(f) = cfg.data.split_fractions {
                spec.fractions = f;
            }
            data_io::generate_split(&ds.manifest, &spec)?
        }
        Some("manifest") => ds
            .manifest
            .splits
            .clone()
            .ok_or_else(|| Error::Schema("manifest has no split assignment".into()))?,
        Some(path) => data_io::read_splits(&cfg.resolve(Path::new(path), root))?,
    };
    let known: std::collections::HashSet<&str> = ds.segments.iter().map(|s| s.id.as_str()).collect();
    let unknown: Vec<String> = assignment.keys().filter(|k| !known.contains(k.as_str())).cloned().collect();
    if !unknown.is_empty() {
        return Err(Error::MissingIds(unknown));
    }
    Ok(assignment)
}

/// Row indices of each split, in store order.
struct Partition {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

impl Partition {
    fn new(ds: &Dataset, a: &SplitAssignment) -> Result<Self> {
        let mut p = Partition { train: Vec::new(), val: Vec::new(), test: Vec::new() };
        for (i, s) in ds.segments.iter().enumerate() {
            match a.get(&s.id) {
                Some(SplitTag::Train) => p.train.push(i),
                Some(SplitTag::Validation) => p.val.push(i),
                Some(SplitTag::Test) => p.test.push(i),
                None => {}
            }
        }
        if p.train.is_empty() || p.test.is_empty() {
            return Err(Error::InfeasibleSplit(format!(
                "train has {} and test has {} segments",
                p.train.len(),
                p.test.len()
            )));
        }
        Ok(p)
    }

    fn tags(&self) -> [(&'static str, &[usize]); 3] {
        [("train", &self.train), ("validation", &self.val), ("test", &self.test)]
    }
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

fn preprocess_all(ds: &Dataset, task: Task) -> Result<Vec<Vec<f64>>> {
    ds.segments
        .par_iter()
        .map(|s| {
            preprocess_slice(&s.segment.samples, s.segment.fs, task).map_err(|e| Error::segment(&s.id, e.to_string()))
        })
        .collect()
}

/// Feature rows; a segment whose extractor fails gets an all-NaN row.
fn represent_all(signals: &[Vec<f64>], fs: f64, rep: Representation) -> Result<Vec<Vec<f64>>> {
    let n = signals.first().map_or(0, Vec::len);
    match rep {
        Representation::Raw => Ok(signals.to_vec()),
        Representation::Cif => Ok(signals
            .par_iter()
            .map(|x| segment_features_slice(x, fs).map_or_else(|_| vec![f64::NAN; 28], |f| f.as_slice().to_vec()))
            .collect()),
        Representation::Irregularity => Ok(signals
            .par_iter()
            .map(|x| irregularity_from_slice(x, fs).map_or_else(|_| vec![f64::NAN; 7], |v| v.values.to_vec()))
            .collect()),
        Representation::Wavelet => signals.par_iter().map(|x| Ok(wpd_slice(x, WPD_LEVEL)?.flattened())).collect(),
        Representation::CwtFeatures => {
            let plan = CwtPlan::new(fs, n)?;
            signals.par_iter().map(|x| Ok(cwt_features(&plan.transform(x)?))).collect()
        }
    }
}

/// Replaces non-finite cells with the column median over `train` rows.
/// Returns the number of rows that were entirely non-finite, per split.
fn impute(rows: &mut [Vec<f64>], part: &Partition) -> Result<BTreeMap<String, usize>> {
    let width = rows.first().map_or(0, Vec::len);
    let mut medians = Vec::with_capacity(width);
    for j in 0..width {
        let col: Vec<f64> = part.train.iter().map(|&i| rows[i][j]).filter(|v| v.is_finite()).collect();
        if col.is_empty() {
            return Err(Error::InvalidInput(format!("feature {j} is undefined on every training segment"))
                .at_stage("represent"));
        }
        medians.push(crate::models::median(&col));
    }
    let mut failed = BTreeMap::new();
    for (tag, idx) in part.tags() {
        let mut count = 0;
        for &i in idx {
            if rows[i].iter().all(|v| !v.is_finite()) {
                count += 1;
            }
            for (v, m) in rows[i].iter_mut().zip(&medians) {
                if !v.is_finite() {
                    *v = *m;
                }
            }
        }
        failed.insert(tag.to_string(), count);
    }
    Ok(failed)
}

struct SplitRows {
    train: Vec<Vec<f64>>,
    val: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
}

impl SplitRows {
    fn new(rows: &[Vec<f64>], p: &Partition) -> Self {
        Self { train: pick(rows, &p.train), val: pick(rows, &p.val), test: pick(rows, &p.test) }
    }
}

fn fit_regression(cfg: &RunConfig, x: &SplitRows, y: &[f64], yv: &[f64], seed: u64) -> Result<Vec<f64>> {
    let validation = (!x.val.is_empty()).then_some((x.val.as_slice(), yv));
    match cfg.model {
        ModelKind::Mlp => {
            let mut m = cfg.hyper.mlp.clone();
            m.loss = if m.loss == Loss::Mse { Loss::Mse } else { Loss::Mae };
            m.seed = seed;
            Mlp::fit(&x.train, y, validation, m)?.predict(&x.test)
        }
        ModelKind::MlpGnllMcdropout => {
            let mut m = cfg.hyper.mlp.clone();
            m.loss = Loss::Gnll;
            m.seed = seed;
            let model = Mlp::fit(&x.train, y, validation, m)?;
            Ok(model.predict_mc_dropout(&x.test, cfg.hyper.mc_passes, seed)?.mean)
        }
        ModelKind::Gpr => {
            let mut g = cfg.hyper.gpr.clone();
            g.seed = seed;
            Ok(Gpr::fit(&x.train, y, validation, &g)?.predict(&x.test)?.0)
        }
        ModelKind::MinirocketLinear => {
            let m = match validation {
                Some((vr, vy)) => RidgeRegressor::fit_validated(&x.train, y, vr, vy, cfg.hyper.ridge_grid.as_deref())?,
                None => RidgeRegressor::fit(&x.train, y, 1.0)?,
            };
            m.predict(&x.test)
        }
        ModelKind::Baseline | ModelKind::External => unreachable!("handled without features"),
    }
}

fn fit_classifier(cfg: &RunConfig, x: &SplitRows, y: &[f64], yv: &[f64]) -> Result<Vec<f64>> {
    let validation = (!x.val.is_empty()).then_some((x.val.as_slice(), yv));
    match cfg.model {
        ModelKind::Mlp => {
            let mut m = cfg.hyper.mlp.clone();
            m.loss = Loss::CrossEntropy;
            m.seed = cfg.seed;
            Mlp::fit(&x.train, y, validation, m)?.predict(&x.test)
        }
        ModelKind::MinirocketLinear => {
            let m = match validation {
                Some((vr, vy)) => {
                    LogisticRegressor::fit_validated(&x.train, y, vr, vy, cfg.hyper.logistic_grid.as_deref())?
                }
                None => LogisticRegressor::fit(&x.train, y, 1e-2)?,
            };
            m.predict_proba(&x.test)
        }
        other => Err(Error::Config(format!("{} cannot classify", other.name()))),
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn predictions_csv(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("predictions.csv", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 csv"))
}

/// Runs the whole pipeline. Relative data paths resolve against `data_root`.
/// Errors are tagged with the failing stage.
pub fn run(cfg: &RunConfig, data_root: Option<&Path>) -> Result<RunArtifacts> {
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    let task = cfg.task.signal_task();
    let ds = data_io::load_named(&cfg.data_dir(data_root), &cfg.data.dataset, Some(task))
        .map_err(|e| e.at_stage("load"))?;
    let tg = targets(&ds, cfg.task).map_err(|e| e.at_stage("load"))?;
    let assignment = resolve_splits(cfg, &ds, data_root).map_err(|e| e.at_stage("split"))?;
    let part = Partition::new(&ds, &assignment).map_err(|e| e.at_stage("split"))?;
    let ids: Vec<String> = ds.ids();
    let subjects: Vec<String> = ds.segments.iter().map(|s| s.segment.subject_id.clone()).collect();
    let test_ids = pick(&ids, &part.test);
    let test_subjects = pick(&subjects, &part.test);

    let mut imputed: BTreeMap<String, usize> = part.tags().iter().map(|(t, _)| (t.to_string(), 0)).collect();
    let rows = if cfg.model.uses_signal() {
        let signals = preprocess_all(&ds, task).map_err(|e| e.at_stage("preprocess"))?;
        let mut rows =
            represent_all(&signals, ds.manifest.fs, cfg.representation).map_err(|e| e.at_stage("represent"))?;
        imputed = impute(&mut rows, &part)?;
        if cfg.model == ModelKind::MinirocketLinear {
            let rocket = MiniRocket::fit(&pick(&rows, &part.train), cfg.seed).map_err(|e| e.at_stage("fit"))?;
            rows = rocket.transform(&rows).map_err(|e| e.at_stage("represent"))?;
        }
        Some(SplitRows::new(&rows, &part))
    } else {
        None
    };

    let external = match (cfg.model, &cfg.data.external_predictions) {
        (ModelKind::External, Some(p)) => {
            Some(load_external_predictions(&cfg.resolve(p, data_root), &test_ids).map_err(|e| e.at_stage("fit"))?)
        }
        _ => None,
    };

    let mut baseline_fallbacks = 0;
    let (report, predictions_csv) = match &tg {
        Targets::Bp { sbp, dbp } => {
            let mut preds = Vec::new();
            let mut metrics = Vec::new();
            for (k, y) in [sbp, dbp].into_iter().enumerate() {
                let (y_train, y_val, y_test) = (pick(y, &part.train), pick(y, &part.val), pick(y, &part.test));
                let baseline = BaselineModel::fit(&y_train, &pick(&subjects, &part.train))
                    .map_err(|e| e.at_stage("fit"))?
                    .predict(&test_subjects, cfg.task.baseline_mode());
                baseline_fallbacks = baseline_fallbacks.max(baseline.fallback.iter().filter(|f| **f).count());
                let pred = match (cfg.model, &rows, &external) {
                    (ModelKind::Baseline, _, _) => baseline.values.clone(),
                    (ModelKind::External, _, Some(ext)) => match k {
                        0 => ext.primary.clone(),
                        _ => ext.secondary.clone().ok_or_else(|| {
                            Error::Schema("external predictions need a prediction2 column for DBP".into()).at_stage("fit")
                        })?,
                    },
                    (_, Some(x), _) => {
                        fit_regression(cfg, x, &y_train, &y_val, cfg.seed.wrapping_add(k as u64))
                            .map_err(|e| e.at_stage("fit"))?
                    }
                    _ => unreachable!("features computed for signal models"),
                };
                metrics.push(evaluate_regression(&y_test, &pred, &baseline.values).map_err(|e| e.at_stage("evaluate"))?);
                preds.push((y_test, pred));
            }
            let report = EvalReport::Regression(RegressionReport { sbp: metrics[0], dbp: metrics[1] });
            let rows_out = (0..test_ids.len())
                .map(|i| {
                    vec![
                        test_ids[i].clone(),
                        test_subjects[i].clone(),
                        fmt(preds[0].0[i]),
                        fmt(preds[0].1[i]),
                        fmt(preds[1].0[i]),
                        fmt(preds[1].1[i]),
                    ]
                })
                .collect();
            let csv = predictions_csv(
                &["segment_id", "subject_id", "sbp", "sbp_pred", "dbp", "dbp_pred"],
                rows_out,
            )
            .map_err(|e| e.at_stage("write"))?;
            (report, csv)
        }
        Targets::Af(labels) => {
            let y: Vec<f64> = labels.iter().map(|&b| b as u8 as f64).collect();
            let scores = match (&rows, &external) {
                (_, Some(ext)) => ext.primary.clone(),
                (Some(x), _) => {
                    fit_classifier(cfg, x, &pick(&y, &part.train), &pick(&y, &part.val)).map_err(|e| e.at_stage("fit"))?
                }
                _ => unreachable!("features computed for signal models"),
            };
            let test_labels = pick(labels, &part.test);
            let report = EvalReport::Classification(
                evaluate_classification(&test_labels, &scores).map_err(|e| e.at_stage("evaluate"))?,
            );
            let rows_out = (0..test_ids.len())
                .map(|i| {
                    vec![
                        test_ids[i].clone(),
                        test_subjects[i].clone(),
                        (test_labels[i] as u8).to_string(),
                        fmt(scores[i]),
                    ]
                })
                .collect();
            let csv = predictions_csv(&["segment_id", "subject_id", "af", "score"], rows_out)
                .map_err(|e| e.at_stage("write"))?;
            (report, csv)
        }
    };

    let label = cfg.label();
    let table = report_table(&[(label.clone(), report.clone())]).map_err(|e| e.at_stage("write"))?;
    let repro = ReproRecord {
        pulsebench_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.sha256(),
        seed: cfg.seed,
        config: cfg.clone(),
        dataset: ds.manifest.name.clone(),
        manifest_sha256: sha256_hex(serde_json::to_string(&ds.manifest)?.as_bytes()),
        split_counts: part.tags().iter().map(|(t, idx)| (t.to_string(), idx.len())).collect(),
        imputed_segments: imputed,
        baseline_fallbacks,
    };
    Ok(RunArtifacts { report: RunReport { label, report }, table, predictions_csv, repro })
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub best: bool,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub primary_metric: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Aligned table; the best row's label is prefixed with `*`.
    pub fn table(&self) -> Result<String> {
        let rows: Vec<(String, EvalReport)> = self
            .rows
            .iter()
            .map(|r| (if r.best { format!("* {}", r.label) } else { r.label.clone() }, r.report.clone()))
            .collect();
        report_table(&rows)
    }
}

/// Sorts reports of one task by SBP MASE (ascending, DBP MASE breaks ties)
/// or AUC (descending) and marks the first row best.
pub fn compare(reports: Vec<RunReport>) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::InvalidInput(format!("compare needs at least 2 reports, got {}", reports.len())));
    }
    let regression = matches!(reports[0].report, EvalReport::Regression(_));
    if reports.iter().any(|r| matches!(r.report, EvalReport::Regression(_)) != regression) {
        return Err(Error::InvalidInput("reports mix regression and classification tasks".into()));
    }
    let mut rows: Vec<ComparisonRow> =
        reports.into_iter().map(|r| ComparisonRow { label: r.label, best: false, report: r.report }).collect();
    rows.sort_by(|a, b| {
        let ord = match (&a.report, &b.report) {
            (EvalReport::Regression(x), EvalReport::Regression(y)) => {
                x.sbp.mase.total_cmp(&y.sbp.mase).then(x.dbp.mase.total_cmp(&y.dbp.mase))
            }
            (EvalReport::Classification(x), EvalReport::Classification(y)) => y.auc.total_cmp(&x.auc),
            _ => std::cmp::Ordering::Equal,
        };
        ord.then_with(|| a.label.cmp(&b.label))
    });
    rows[0].best = true;
    let primary_metric = if regression { "sbp_mase" } else { "auc" }.to_string();
    Ok(Comparison { primary_metric, rows })
}
