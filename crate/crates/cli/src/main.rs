//! `scgmm` command-line interface: generation, fitting, aggregation,
//! evaluation and end-to-end experiments.
//!
//! Exit codes: 0 success, 2 invalid input/config/schema, 3 numerical failure.
//! Failures print one line to stderr: `error kind=<input|numerical> message=<json string>`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scgmm::aggregate::{self, LocalEstimates, ShardedDataset};
use scgmm::data::{self, LabeledSample};
use scgmm::experiment::{run_experiment, ExperimentConfig};
use scgmm::gmr::{self, GmrConfig};
use scgmm::metrics::{align_labels, ari, misclassification_rate, w1_distance, Clustering};
use scgmm::pmle::{self, Init, PmleConfig};
use scgmm::simgen::{self, OverlapSpec};
use scgmm::{Error, MixingDistribution, Result};

#[derive(Parser, Debug)]
#[command(
    name = "scgmm",
    version,
    about = "Split-and-conquer learning of finite Gaussian mixtures"
)]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (falls back to the THREADS environment variable).
    #[arg(long, global = true, env = "THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random mixture with a target maximum pairwise overlap.
    GenModel(GenModelArgs),
    /// Draw a labeled sample from a model.
    GenData(GenDataArgs),
    /// Split a dataset into M random shards.
    Split(SplitArgs),
    /// Fit the global penalized MLE.
    Fit(FitArgs),
    /// Fit one penalized MLE per shard and write the local estimates.
    FitLocal(FitLocalArgs),
    /// Aggregate local estimates into one mixture.
    Aggregate(AggregateArgs),
    /// Evaluate an estimate.
    Eval(EvalArgs),
    /// Run a full simulation experiment from a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct GenModelArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    max_omega: f64,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DataFormat {
    Csv,
    Bin,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    format: DataFormat,
    /// CSV includes a label column; binary output has a JSON sidecar and,
    /// with --labels, a separate label file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    m: usize,
    /// Directory receiving shard_0.csv … shard_{M-1}.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct FitOptions {
    #[arg(long)]
    k: usize,
    /// kmeans++ restarts (ignored with --init).
    #[arg(long, default_value_t = 10)]
    n_starts: usize,
    /// Start EM from this model instead of kmeans++.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
}

impl FitOptions {
    fn config(&self) -> Result<PmleConfig> {
        let init = match &self.init {
            Some(p) => Init::Explicit(read_model(p)?),
            None => Init::KMeansPlusPlus {
                n_starts: self.n_starts,
            },
        };
        let mut cfg = PmleConfig::new(self.k).with_init(init);
        cfg.tol = self.tol;
        cfg.max_iter = self.max_iter;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    fit: FitOptions,
    /// Penalty size a_N (default N^{-1/2}).
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitLocalArgs {
    /// One file per shard (repeatable).
    #[arg(long = "shard", required_unless_present = "data")]
    shards: Vec<PathBuf>,
    /// Alternatively, a full dataset split internally into --m shards.
    #[arg(long, requires = "m", conflicts_with = "shards")]
    data: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    fit: FitOptions,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AggMethod {
    Gmr,
    Median,
    Klavg,
    Pool,
}

#[derive(Args, Debug)]
struct AggregateArgs {
    #[arg(long, value_enum)]
    method: AggMethod,
    /// Locals document written by fit-local.
    #[arg(long, required_unless_present = "local")]
    locals: Option<PathBuf>,
    /// Individual local model files (repeatable), paired with --lambda.
    #[arg(long = "local", conflicts_with = "locals")]
    local: Vec<PathBuf>,
    #[arg(long = "lambda")]
    lambda: Vec<f64>,
    /// Target order (defaults to the local order).
    #[arg(long)]
    k: Option<usize>,
    /// Synthetic observations per machine for KL-averaging.
    #[arg(long, default_value_t = 1000)]
    per_machine_n: usize,
    #[arg(long, default_value_t = 10)]
    n_starts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Metric {
    W1,
    Mcr,
    Ari,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_enum)]
    metric: Metric,
    /// Estimated model (w1, mcr).
    #[arg(long)]
    estimate: Option<PathBuf>,
    /// True model (w1, mcr).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Labeled data (mcr).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Two label files, one integer per line (ari).
    #[arg(long = "labels", num_args = 2)]
    labels: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report path; overrides the config's `output`; stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<MixingDistribution> {
    MixingDistribution::from_json(&read_text(path)?)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(Error::from),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

/// Label file: one non-negative integer per line; blank lines and a
/// leading non-numeric header are skipped.
fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().map(str::trim).enumerate() {
        if line.is_empty() {
            continue;
        }
        match line.parse() {
            Ok(l) => out.push(l),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Schema(format!(
                    "{}: line {}: '{line}' is not a label",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn write_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 2);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn gen_model(a: &GenModelArgs, seed: u64) -> Result<()> {
    let spec = OverlapSpec {
        mc_samples: a.mc_samples,
        ..OverlapSpec::new(a.d, a.k, a.max_omega, seed)
    };
    let out = simgen::generate_detailed(&spec)?;
    log_line(&format!(
        "achieved MaxOmega {} at scale {}",
        out.achieved_omega, out.scale
    ));
    emit(&out.model.to_json()?, a.out.as_deref())
}

fn gen_data(a: &GenDataArgs, seed: u64) -> Result<()> {
    let sample = read_model(&a.model)?.sample(a.n, seed)?;
    match a.format {
        DataFormat::Csv => data::write_csv(&sample, &a.out)?,
        DataFormat::Bin => data::write_binary(&sample.points, &a.out)?,
    }
    if let (Some(path), Some(labels)) = (&a.labels, &sample.labels) {
        write_labels(labels, path)?;
    }
    Ok(())
}

fn split(a: &SplitArgs, seed: u64) -> Result<()> {
    let sample = data::read_any(&a.data)?;
    let parts = aggregate::split_indices(sample.points.n(), a.m, seed)?;
    fs::create_dir_all(&a.out_dir)?;
    for (m, idx) in parts.iter().enumerate() {
        data::write_csv(
            &sample.select(idx),
            &a.out_dir.join(format!("shard_{m}.csv")),
        )?;
    }
    Ok(())
}

fn fit(a: &FitArgs, seed: u64) -> Result<()> {
    let sample = data::read_any(&a.data)?;
    let mut cfg = a.fit.config()?;
    cfg.penalty = a.penalty;
    let res = pmle::fit(&sample.points, &cfg, seed)?;
    log_line(&format!(
        "iterations {} converged {}",
        res.iterations, res.converged
    ));
    emit(&res.estimate.to_json()?, a.out.as_deref())
}

fn fit_local(a: &FitLocalArgs, seed: u64) -> Result<()> {
    let shards = match (&a.data, a.m) {
        (Some(path), Some(m)) => aggregate::split(&data::read_any(path)?.points, m, seed)?,
        _ => ShardedDataset::from_shards(
            a.shards
                .iter()
                .map(|p| data::read_any(p).map(|s| s.points))
                .collect::<Result<Vec<_>>>()?,
        )?,
    };
    let locals = aggregate::fit_locals(&shards, &a.fit.config()?, seed)?;
    emit(&locals.to_json()?, a.out.as_deref())
}

fn load_locals(a: &AggregateArgs) -> Result<LocalEstimates> {
    if let Some(path) = &a.locals {
        return LocalEstimates::from_json(&read_text(path)?);
    }
    let models = a
        .local
        .iter()
        .map(|p| read_model(p))
        .collect::<Result<Vec<_>>>()?;
    let lambdas = if a.lambda.is_empty() {
        vec![1.0 / models.len() as f64; models.len()]
    } else {
        a.lambda.clone()
    };
    LocalEstimates::new(models, lambdas)
}

fn aggregate(a: &AggregateArgs, seed: u64) -> Result<()> {
    let locals = load_locals(a)?;
    let k = a.k.unwrap_or_else(|| locals.order());
    let est = match a.method {
        AggMethod::Gmr => aggregate::aggregate_gmr(&locals, &GmrConfig::new(k))?,
        AggMethod::Median => aggregate::aggregate_median(&locals)?,
        AggMethod::Klavg => {
            let cfg = PmleConfig::new(k).with_init(Init::KMeansPlusPlus {
                n_starts: a.n_starts,
            });
            aggregate::aggregate_klavg(&locals, a.per_machine_n, &cfg, seed)?
        }
        AggMethod::Pool => gmr::pool(&locals.estimates, &locals.lambdas)?,
    };
    emit(&est.to_json()?, a.out.as_deref())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required for this metric")))
}

fn eval(a: &EvalArgs) -> Result<()> {
    let value = match a.metric {
        Metric::W1 => w1_distance(
            &read_model(required(&a.estimate, "estimate")?)?,
            &read_model(required(&a.truth, "truth")?)?,
        )?,
        Metric::Mcr => {
            let est = read_model(required(&a.estimate, "estimate")?)?;
            let truth = read_model(required(&a.truth, "truth")?)?;
            let sample: LabeledSample = data::read_any(required(&a.data, "data")?)?;
            misclassification_rate(&est, &sample, &align_labels(&est, &truth)?)?
        }
        Metric::Ari => {
            let [pa, pb] = a.labels.as_slice() else {
                return Err(Error::InvalidArgument(
                    "--labels takes exactly two files".into(),
                ));
            };
            let (la, lb) = (read_labels(pa)?, read_labels(pb)?);
            ari(&Clustering::from_labels(la), &Clustering::from_labels(lb))?
        }
    };
    println!("{value:?}");
    Ok(())
}

fn experiment(a: &ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let report = run_experiment(&cfg)?;
    let out = a.out.clone().or_else(|| {
        cfg.output.as_ref().map(|o| {
            let base = a.config.parent().unwrap_or(Path::new("."));
            base.join(o)
        })
    });
    match out {
        Some(p) => fs::write(p, report.to_csv()).map_err(Error::from),
        None => {
            print!("{}", report.to_csv());
            Ok(())
        }
    }
}

fn log_line(msg: &str) {
    if std::env::var_os("SCGMM_QUIET").is_none() {
        eprintln!("{msg}");
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::GenModel(a) => gen_model(a, cli.seed),
        Command::GenData(a) => gen_data(a, cli.seed),
        Command::Split(a) => split(a, cli.seed),
        Command::Fit(a) => fit(a, cli.seed),
        Command::FitLocal(a) => fit_local(a, cli.seed),
        Command::Aggregate(a) => aggregate(a, cli.seed),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = if e.is_numerical() {
                ("numerical", 3)
            } else {
                ("input", 2)
            };
            let message = serde_json::to_string(&e.to_string()).unwrap_or_default();
            eprintln!("error kind={kind} message={message}");
            ExitCode::from(code)
        }
    }
}
