//! Repeated nested cross-validation with grid-search tuning.
//!
//! Each repeat draws a fresh stratified outer split (seed `base + repeat`).
//! Within every outer training portion an inner stratified split scores each
//! grid point by the mean of the selection metric over inner folds; the
//! winner is refit on the whole training portion and scored on the held-out
//! fold. Test rows are never passed to anything that fits.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{fit_rmdd, CssvmPrepared, LinearModel, Method, PscPrepared};
use crate::dataset::{load_csv, simulate_fig1, simulate_hdlss, stratified_kfold, LabeledMatrix, Standardizer};
use crate::error::{Error, Result};
use crate::fmt as f17;
use crate::intercept::DEFAULT_R_SCALE;
use crate::metrics::{evaluate, ConfusionMatrix, EvalReport};
use crate::qp::{DEFAULT_MAX_ITER, DEFAULT_TOL};

pub const DEFAULT_GAMMA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const DEFAULT_C0_GRID: [f64; 6] = [0.03125, 0.125, 0.5, 2.0, 8.0, 32.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
        #[serde(default = "default_positive_labels")]
        positive_labels: Vec<String>,
    },
    /// `N(±c·1, I)` with `c = 1.35/√d`.
    Hdlss {
        d: usize,
        n_pos: usize,
        n_neg: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Fig1 {
        n_pos: usize,
        n_neg: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

pub fn default_label_column() -> String {
    "label".into()
}

pub fn default_positive_labels() -> Vec<String> {
    vec!["1".into(), "+1".into()]
}

impl DataSource {
    /// Simulators without their own seed use `fallback_seed`.
    pub fn load(&self, fallback_seed: u64) -> Result<LabeledMatrix> {
        match self {
            DataSource::Csv {
                path,
                label_column,
                positive_labels,
            } => {
                let positives: HashSet<String> = positive_labels.iter().cloned().collect();
                load_csv(path, label_column, &positives)
            }
            DataSource::Hdlss { d, n_pos, n_neg, seed } => {
                simulate_hdlss(*d, *n_pos, *n_neg, seed.unwrap_or(fallback_seed))
            }
            DataSource::Fig1 { n_pos, n_neg, seed } => simulate_fig1(*n_pos, *n_neg, seed.unwrap_or(fallback_seed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    Bccr,
    TotalCcr,
    /// Minimized; scored internally as `1 − mwe`.
    Mwe,
}

impl SelectionMetric {
    fn score(self, report: &EvalReport) -> f64 {
        match self {
            SelectionMetric::Bccr => report.bccr,
            SelectionMetric::TotalCcr => report.total_ccr,
            SelectionMetric::Mwe => 1.0 - report.mwe,
        }
    }
}

impl std::str::FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bccr" => Ok(Self::Bccr),
            "total_ccr" => Ok(Self::TotalCcr),
            "mwe" => Ok(Self::Mwe),
            other => Err(Error::InvalidInput(format!("unknown selection metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: DataSource,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_c0_grid")]
    pub c0_grid: Vec<f64>,
    #[serde(default = "default_r_scale")]
    pub r_scale: f64,
    #[serde(default = "default_outer")]
    pub outer_folds: usize,
    #[serde(default = "default_inner")]
    pub inner_folds: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_metric")]
    pub selection_metric: SelectionMetric,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Per-feature z-scoring, fitted on each training portion only.
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_method() -> Method {
    Method::Psc
}
fn default_gamma_grid() -> Vec<f64> {
    DEFAULT_GAMMA_GRID.to_vec()
}
fn default_c0_grid() -> Vec<f64> {
    DEFAULT_C0_GRID.to_vec()
}
fn default_r_scale() -> f64 {
    DEFAULT_R_SCALE
}
fn default_outer() -> usize {
    5
}
fn default_inner() -> usize {
    4
}
fn default_repeats() -> usize {
    18
}
fn default_metric() -> SelectionMetric {
    SelectionMetric::Bccr
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

impl ExperimentConfig {
    /// All protocol fields at their defaults.
    pub fn new(source: DataSource) -> Self {
        Self {
            source,
            method: default_method(),
            gamma_grid: default_gamma_grid(),
            c0_grid: default_c0_grid(),
            r_scale: DEFAULT_R_SCALE,
            outer_folds: 5,
            inner_folds: 4,
            repeats: 18,
            selection_metric: SelectionMetric::Bccr,
            seed: 0,
            out_dir: None,
            standardize: false,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.method == Method::Bayes {
            return bad("the bayes rule needs known populations and cannot be cross-validated".into());
        }
        if self.gamma_grid.is_empty() || self.c0_grid.is_empty() {
            return bad("hyperparameter grids must be non-empty".into());
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return bad(format!("gamma grid value {g} outside (0, 1)"));
        }
        if let Some(c) = self.c0_grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return bad(format!("c0 grid value {c} is not positive"));
        }
        if !(self.r_scale > 0.0) {
            return bad(format!("r_scale must be positive, got {}", self.r_scale));
        }
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return bad("fold counts must be at least 2".into());
        }
        if self.repeats < 1 {
            return bad("repeats must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        Ok(())
    }

    /// Grid points in tie-break order: smaller `c0` first, then smaller
    /// `gamma`. Only PSC uses `gamma`; RMDD has nothing to tune.
    fn candidates(&self) -> Vec<Choice> {
        let mut c0s = self.c0_grid.clone();
        let mut gammas = self.gamma_grid.clone();
        c0s.sort_by(f64::total_cmp);
        c0s.dedup();
        gammas.sort_by(f64::total_cmp);
        gammas.dedup();
        match self.method {
            Method::Psc => c0s
                .iter()
                .flat_map(|&c0| gammas.iter().map(move |&g| Choice { gamma: Some(g), c0: Some(c0) }))
                .collect(),
            Method::Cssvm => c0s.iter().map(|&c0| Choice { gamma: None, c0: Some(c0) }).collect(),
            Method::Rmdd | Method::Bayes => vec![Choice { gamma: None, c0: None }],
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    #[serde(serialize_with = "f17::ser_opt_f64")]
    pub gamma: Option<f64>,
    #[serde(serialize_with = "f17::ser_opt_f64")]
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub choice: Choice,
    /// Mean inner-fold score; NaN when nothing was tuned.
    #[serde(serialize_with = "f17::ser_f64", deserialize_with = "f17::de_f64_or_nan")]
    pub score: f64,
}

/// splitmix64 finalizer over `base + tag`, for independent child seeds.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base.wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rewrites a model fitted on z-scored inputs as a rule on raw inputs.
fn unstandardize(model: &mut LinearModel, z: &Standardizer) {
    let mut shift = 0.0;
    for (j, w) in model.w.iter_mut().enumerate() {
        *w /= z.scale()[j];
        shift += *w * z.mean()[j];
    }
    model.b -= shift;
}

/// Fits `method` on `train` for every candidate sharing one `gamma`, reusing
/// the Gram matrix across `c0`. Results keep candidate order.
fn fit_candidates(cfg: &ExperimentConfig, train: &LabeledMatrix, candidates: &[Choice]) -> Vec<Result<LinearModel>> {
    let (train_z, z) = if cfg.standardize {
        let z = Standardizer::fit(train);
        match train.map_samples(|x| z.transform(x)) {
            Ok(t) => (t, Some(z)),
            Err(e) => return candidates.iter().map(|_| Err(e.clone())).collect(),
        }
    } else {
        (train.clone(), None)
    };
    let mut out: Vec<Result<LinearModel>> = Vec::with_capacity(candidates.len());
    let mut i = 0;
    while i < candidates.len() {
        let gamma = candidates[i].gamma;
        let mut j = i;
        while j < candidates.len() && candidates[j].gamma == gamma {
            j += 1;
        }
        let group = &candidates[i..j];
        match cfg.method {
            Method::Psc => match PscPrepared::new(&train_z, gamma.expect("psc candidates carry gamma")) {
                Ok(prep) => out.extend(group.iter().map(|c| {
                    prep.fit(c.c0.expect("c0"), cfg.r_scale, cfg.tol, cfg.max_iter).map(|f| f.model)
                })),
                Err(e) => out.extend(group.iter().map(|_| Err(e.clone()))),
            },
            Method::Cssvm => match CssvmPrepared::new(&train_z) {
                Ok(prep) => out.extend(group.iter().map(|c| {
                    prep.fit(c.c0.expect("c0"), cfg.r_scale, cfg.tol, cfg.max_iter).map(|f| f.model)
                })),
                Err(e) => out.extend(group.iter().map(|_| Err(e.clone()))),
            },
            Method::Rmdd => out.extend(group.iter().map(|_| fit_rmdd(&train_z, cfg.r_scale))),
            Method::Bayes => out.extend(
                group
                    .iter()
                    .map(|_| Err(Error::InvalidInput("bayes cannot be fitted from data".into()))),
            ),
        }
        i = j;
    }
    if let Some(z) = z {
        for m in out.iter_mut().flatten() {
            unstandardize(m, &z);
        }
    }
    out
}

/// Fits the configured method at one grid point.
pub fn fit_choice(cfg: &ExperimentConfig, train: &LabeledMatrix, choice: Choice) -> Result<LinearModel> {
    fit_candidates(cfg, train, &[choice]).pop().expect("one candidate")
}

/// Candidates sorted so equal `gamma` values are adjacent (needed for Gram
/// reuse); returns the permutation back to tie-break order as well.
fn grouped(candidates: &[Choice]) -> (Vec<Choice>, Vec<usize>) {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let ga = candidates[a].gamma.unwrap_or(0.0);
        let gb = candidates[b].gamma.unwrap_or(0.0);
        ga.total_cmp(&gb).then(a.cmp(&b))
    });
    (order.iter().map(|&i| candidates[i]).collect(), order)
}

/// Inner-CV grid search on `train`. A grid point whose fit fails on any
/// inner fold is disqualified; if all are, the first error is returned.
pub fn tune(cfg: &ExperimentConfig, train: &LabeledMatrix, seed: u64) -> Result<Tuned> {
    let candidates = cfg.candidates();
    if candidates.len() == 1 {
        return Ok(Tuned {
            choice: candidates[0],
            score: f64::NAN,
        });
    }
    let plan = stratified_kfold(train.labels(), cfg.inner_folds, seed)?;
    let (sorted, order) = grouped(&candidates);
    let mut sums = vec![0.0; candidates.len()];
    let mut failed: Vec<Option<Error>> = vec![None; candidates.len()];
    for fold in 0..cfg.inner_folds {
        let inner_train = train.select(&plan.train_indices(fold))?;
        let test_idx = plan.test_indices(fold);
        let test_x = train.samples().select_rows(&test_idx);
        let test_y: Vec<i8> = test_idx.iter().map(|&i| train.labels()[i]).collect();
        for (k, fit) in fit_candidates(cfg, &inner_train, &sorted).into_iter().enumerate() {
            let slot = order[k];
            let scored = fit
                .and_then(|m| m.decisions(&test_x))
                .and_then(|dec| evaluate(&test_y, &dec))
                .map(|r| cfg.selection_metric.score(&r));
            match scored {
                Ok(s) => sums[slot] += s,
                Err(e) => {
                    failed[slot].get_or_insert(e);
                }
            }
        }
    }
    let mut best: Option<Tuned> = None;
    for (slot, choice) in candidates.iter().enumerate() {
        if failed[slot].is_some() {
            continue;
        }
        let score = sums[slot] / cfg.inner_folds as f64;
        if best.is_none_or(|b| score > b.score) {
            best = Some(Tuned { choice: *choice, score });
        }
    }
    match best {
        Some(b) => Ok(b),
        None => Err(failed.into_iter().flatten().next().expect("every candidate failed")),
    }
}

/// Tuning, refit and held-out decisions for one outer fold.
#[derive(Debug, Clone)]
pub struct OuterFold {
    pub tuned: Tuned,
    pub model: LinearModel,
    pub test_indices: Vec<usize>,
    pub decisions: Vec<f64>,
}

/// Only rows in `train_idx` are read for tuning and fitting; `test_idx`
/// rows are touched solely by the final decision evaluation.
pub fn run_outer_fold(
    cfg: &ExperimentConfig,
    data: &LabeledMatrix,
    train_idx: &[usize],
    test_idx: &[usize],
    inner_seed: u64,
) -> Result<OuterFold> {
    let train = data.select(train_idx)?;
    let tuned = tune(cfg, &train, inner_seed)?;
    let model = fit_choice(cfg, &train, tuned.choice)?;
    let decisions = model.decisions(&data.samples().select_rows(test_idx))?;
    Ok(OuterFold {
        tuned,
        model,
        test_indices: test_idx.to_vec(),
        decisions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub repeat: usize,
    pub fold: usize,
    pub n_test: usize,
    pub tuned: Option<Tuned>,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seed: u64,
    pub failed_folds: usize,
    /// Metrics over the concatenated held-out decisions of the repeat.
    pub pooled: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    #[serde(serialize_with = "f17::ser_f64", deserialize_with = "f17::de_f64_or_nan")]
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); 0 for one repeat.
    #[serde(serialize_with = "f17::ser_f64", deserialize_with = "f17::de_f64_or_nan")]
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub repeats: usize,
    pub failed_folds: usize,
    /// Confusion counts summed over every fold of every repeat.
    pub pooled: EvalReport,
    pub ccr1: MeanStd,
    pub ccr2: MeanStd,
    pub total_ccr: MeanStd,
    pub mwe: MeanStd,
    pub bccr: MeanStd,
    pub auc: MeanStd,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutput {
    pub folds: Vec<FoldRecord>,
    pub repeats: Vec<RepeatRecord>,
    pub summary: Summary,
}

/// Runs the full protocol on `data`. Outer splits that are infeasible abort
/// the run; any other per-fold failure is recorded and the run continues.
pub fn cv_run_on(cfg: &ExperimentConfig, data: &LabeledMatrix) -> Result<CvOutput> {
    cfg.validate()?;
    let plans = (0..cfg.repeats)
        .map(|r| stratified_kfold(data.labels(), cfg.outer_folds, cfg.seed.wrapping_add(r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.outer_folds).map(move |f| (r, f)))
        .collect();
    let outcomes: Vec<Result<OuterFold>> = tasks
        .par_iter()
        .map(|&(r, f)| {
            let plan = &plans[r];
            let inner_seed = derive_seed(plan.seed, f as u64);
            run_outer_fold(cfg, data, &plan.train_indices(f), &plan.test_indices(f), inner_seed)
        })
        .collect();

    let mut folds = Vec::with_capacity(tasks.len());
    let mut repeats = Vec::with_capacity(cfg.repeats);
    let mut grand = ConfusionMatrix::default();
    let mut per_repeat: Vec<EvalReport> = Vec::new();
    let mut failed_total = 0;
    for (r, plan) in plans.iter().enumerate() {
        let mut labels = Vec::new();
        let mut decisions = Vec::new();
        let mut failed = 0;
        for f in 0..cfg.outer_folds {
            let outcome = &outcomes[r * cfg.outer_folds + f];
            let n_test = plan.test_indices(f).len();
            let record = match outcome {
                Ok(o) => {
                    let y: Vec<i8> = o.test_indices.iter().map(|&i| data.labels()[i]).collect();
                    let report = evaluate(&y, &o.decisions)?;
                    labels.extend_from_slice(&y);
                    decisions.extend_from_slice(&o.decisions);
                    FoldRecord {
                        repeat: r,
                        fold: f,
                        n_test,
                        tuned: Some(o.tuned),
                        report: Some(report),
                        error: None,
                    }
                }
                Err(e) => {
                    failed += 1;
                    FoldRecord {
                        repeat: r,
                        fold: f,
                        n_test,
                        tuned: None,
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            folds.push(record);
        }
        let pooled = if labels.is_empty() {
            None
        } else {
            let report = evaluate(&labels, &decisions)?;
            grand = grand + report.confusion;
            per_repeat.push(report.clone());
            Some(report)
        };
        failed_total += failed;
        repeats.push(RepeatRecord {
            repeat: r,
            seed: plan.seed,
            failed_folds: failed,
            pooled,
        });
    }

    let column = |f: fn(&EvalReport) -> f64| MeanStd::of(&per_repeat.iter().map(f).collect::<Vec<_>>());
    let summary = Summary {
        method: cfg.method,
        repeats: cfg.repeats,
        failed_folds: failed_total,
        pooled: EvalReport::from_confusion(grand),
        ccr1: column(|r| r.ccr1),
        ccr2: column(|r| r.ccr2),
        total_ccr: column(|r| r.total_ccr),
        mwe: column(|r| r.mwe),
        bccr: column(|r| r.bccr),
        auc: column(|r| r.auc.unwrap_or(f64::NAN)),
    };
    Ok(CvOutput {
        folds,
        repeats,
        summary,
    })
}

pub fn cv_run(cfg: &ExperimentConfig) -> Result<CvOutput> {
    cfg.validate()?;
    let data = cfg.source.load(cfg.seed)?;
    cv_run_on(cfg, &data)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `config.json`, `folds.json`, `repeats.json` and `summary.json`.
pub fn write_cv_outputs(cfg: &ExperimentConfig, out: &CvOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(vec![
        write_json(dir, "config.json", cfg)?,
        write_json(dir, "folds.json", &out.folds)?,
        write_json(dir, "repeats.json", &out.repeats)?,
        write_json(dir, "summary.json", &out.summary)?,
    ])
}
