use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use psc_core::classifier::{bayes_oracle, fit_cssvm, fit_psc, fit_rmdd, Hyperparams, LinearModel, Method};
use psc_core::cv::{cv_run, default_positive_labels, write_cv_outputs, DataSource, ExperimentConfig, SelectionMetric};
use psc_core::dataset::{fig1_covariance, fig1_mean, load_csv, read_table, simulate_fig1, simulate_hdlss, write_csv};
use psc_core::fmt::sig17;
use psc_core::metrics::{evaluate, write_roc_csv};
use psc_core::qp::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use psc_core::LabeledMatrix;

#[derive(Parser)]
#[command(name = "psc", version, about = "Linear classifiers for imbalanced high-dimension, low-sample-size data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a labelled Gaussian sample and write it as CSV.
    Simulate(SimulateArgs),
    /// Train a model on a CSV and write it as JSON.
    Fit(FitArgs),
    /// Apply a model to a CSV and write id,decision,prediction rows.
    Predict(PredictArgs),
    /// Score a predictions file against labelled data.
    Evaluate(EvaluateArgs),
    /// Repeated nested cross-validation with grid-search tuning.
    Cv(CvArgs),
    /// Write the four two-dimensional border-variability samples and the
    /// boundaries of every method, for plotting.
    DemoFig1(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Hdlss,
    Fig1,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "hdlss")]
    kind: SimKind,
    /// Feature dimension (hdlss only).
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long)]
    n_pos: usize,
    #[arg(long)]
    n_neg: usize,
    #[arg(long, env = "PSC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct LabelArgs {
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Label values mapped to +1 (repeatable); everything else is −1.
    #[arg(long = "positive", default_values_t = default_positive_labels())]
    positive: Vec<String>,
}

impl LabelArgs {
    fn load(&self, path: &Path) -> Result<LabeledMatrix> {
        let positives: HashSet<String> = self.positive.iter().cloned().collect();
        Ok(load_csv(path, &self.label_column, &positives)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FitMethod {
    Psc,
    Cssvm,
    Rmdd,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum, default_value = "psc")]
    method: FitMethod,
    #[arg(long)]
    train: PathBuf,
    #[command(flatten)]
    labels: LabelArgs,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value_t = 2.0)]
    r_scale: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of samples; a label column, if present, is ignored.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "label")]
    label_column: String,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[command(flatten)]
    labels: LabelArgs,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Also write the ROC curve as fpr,tpr rows.
    #[arg(long)]
    roc: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV dataset, replacing the config's source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long = "positive")]
    positive: Vec<String>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    c0_grid: Option<Vec<f64>>,
    #[arg(long)]
    r_scale: Option<f64>,
    #[arg(long)]
    outer_folds: Option<usize>,
    #[arg(long)]
    inner_folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    metric: Option<SelectionMetric>,
    #[arg(long, env = "PSC_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, env = "PSC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "fig1")]
    out_dir: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let data = match args.kind {
        SimKind::Hdlss => simulate_hdlss(args.d, args.n_pos, args.n_neg, args.seed)?,
        SimKind::Fig1 => simulate_fig1(args.n_pos, args.n_neg, args.seed)?,
    };
    write_csv(&data, &args.out)?;
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let data = args.labels.load(&args.train)?;
    let model = match args.method {
        FitMethod::Psc => {
            let hp = Hyperparams {
                gamma: args.gamma,
                c0: args.c0,
                r_scale: args.r_scale,
                tol: args.tol,
                max_iter: args.max_iter,
            };
            fit_psc(&data, &hp)?
        }
        FitMethod::Cssvm => fit_cssvm(&data, args.c0, args.tol, args.max_iter)?,
        FitMethod::Rmdd => fit_rmdd(&data, args.r_scale)?,
    };
    if !model.converged {
        eprintln!(
            "psc: warning: dual solver stopped after {} iterations without meeting tol {}",
            args.max_iter, args.tol
        );
    }
    write_text(&args.out, &(model.to_json()? + "\n"))
}

fn read_model(path: &Path) -> Result<LinearModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    LinearModel::from_json(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let table = read_table(&args.data, Some(&args.label_column))
        .or_else(|_| read_table(&args.data, None))
        .with_context(|| format!("reading {}", args.data.display()))?;
    let decisions = model
        .decisions(&table.samples)
        .with_context(|| format!("{} has the wrong number of feature columns", args.data.display()))?;
    let mut out = String::from("id,decision,prediction\n");
    for (i, d) in decisions.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", sig17(*d), psc_core::metrics::predict_sign(*d)));
    }
    write_text(&args.out, &out)
}

fn read_decisions(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == "decision")
        .with_context(|| format!("{}: no `decision` column", path.display()))?;
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let cell = rec.get(col).unwrap_or("");
            cell.trim()
                .parse::<f64>()
                .with_context(|| format!("{}: line {}: bad decision `{cell}`", path.display(), i + 2))
        })
        .collect()
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let decisions = read_decisions(&args.pred)?;
    let truth = args.labels.load(&args.truth)?;
    if decisions.len() != truth.n() {
        bail!(
            "{} has {} predictions but {} has {} labelled rows",
            args.pred.display(),
            decisions.len(),
            args.truth.display(),
            truth.n()
        );
    }
    let report = evaluate(truth.labels(), &decisions)?;
    write_text(&args.out, &(report.to_json()? + "\n"))?;
    if let (Some(path), Some(points)) = (&args.roc, &report.roc) {
        write_roc_csv(points, path)?;
    }
    Ok(())
}

fn resolve_config(args: &CvArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => {
            let Some(data) = &args.data else {
                bail!("cv needs --config or --data");
            };
            ExperimentConfig::new(DataSource::Csv {
                path: data.clone(),
                label_column: "label".into(),
                positive_labels: default_positive_labels(),
            })
        }
    };
    if let Some(data) = &args.data {
        cfg.source = DataSource::Csv {
            path: data.clone(),
            label_column: "label".into(),
            positive_labels: default_positive_labels(),
        };
    }
    if let DataSource::Csv {
        label_column,
        positive_labels,
        ..
    } = &mut cfg.source
    {
        if let Some(l) = &args.label_column {
            *label_column = l.clone();
        }
        if !args.positive.is_empty() {
            *positive_labels = args.positive.clone();
        }
    }
    if let Some(v) = args.method {
        cfg.method = v;
    }
    if let Some(v) = &args.gamma_grid {
        cfg.gamma_grid = v.clone();
    }
    if let Some(v) = &args.c0_grid {
        cfg.c0_grid = v.clone();
    }
    if let Some(v) = args.r_scale {
        cfg.r_scale = v;
    }
    if let Some(v) = args.outer_folds {
        cfg.outer_folds = v;
    }
    if let Some(v) = args.inner_folds {
        cfg.inner_folds = v;
    }
    if let Some(v) = args.repeats {
        cfg.repeats = v;
    }
    if let Some(v) = args.metric {
        cfg.selection_metric = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.standardize {
        cfg.standardize = true;
    }
    if let Some(v) = &args.out_dir {
        cfg.out_dir = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cv(args: CvArgs) -> Result<()> {
    let cfg = resolve_config(&args)?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("cv_out"));
    let output = cv_run(&cfg)?;
    write_cv_outputs(&cfg, &output, &out_dir)?;
    let s = &output.summary;
    eprintln!(
        "psc: {} repeats, {} failed folds, pooled bccr {}",
        s.repeats,
        s.failed_folds,
        sig17(s.pooled.bccr)
    );
    Ok(())
}

const FIG1_PANELS: [(&str, usize, usize); 4] = [("a", 5, 65), ("b", 12, 65), ("c", 32, 65), ("d", 65, 65)];

fn demo_fig1(args: DemoArgs) -> Result<()> {
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mu = fig1_mean();
    let bayes = bayes_oracle(&mu, &(-&mu), &fig1_covariance())?;
    let mut rows = String::from("panel,n_pos,n_neg,method,w0,w1,b\n");
    for (k, (panel, n_pos, n_neg)) in FIG1_PANELS.iter().enumerate() {
        let data = simulate_fig1(*n_pos, *n_neg, args.seed.wrapping_add(k as u64))?;
        write_csv(&data, &args.out_dir.join(format!("samples_{panel}.csv")))?;
        let models = [
            fit_psc(&data, &Hyperparams::default())?,
            fit_cssvm(&data, 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
            fit_rmdd(&data, 2.0)?,
            bayes.clone(),
        ];
        for m in &models {
            rows.push_str(&format!(
                "{panel},{n_pos},{n_neg},{},{},{},{}\n",
                m.method_tag,
                sig17(m.w[0]),
                sig17(m.w[1]),
                sig17(m.b)
            ));
        }
    }
    write_text(&args.out_dir.join("boundaries.csv"), &rows)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Cv(a) => cv(a),
        Command::DemoFig1(a) => demo_fig1(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("psc: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
