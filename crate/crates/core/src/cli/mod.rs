//! Command-line front end: simulation tables, dataset generation, model
//! fitting and prediction, and image preprocessing.

pub mod container;
pub mod dataset;
pub mod tensor;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{fit_sdar, fit_slda};
use crate::classifier::{fit, BinaryClassifier, FitOptions};
use crate::dantzig::rate_scale;
use crate::datagen::{Family, PrecisionKind};
use crate::error::{Error, Result};
use crate::evaluation::{
    cv_seed, metrics, replicate_data, run_experiment, tune_and_fit, ExperimentSpec, FittedModel,
    GridSpec, Method, PathCap, TuningGrid, TuningOptions,
};
use container::ModelContainer;
use dataset::{load_dataset, save_dataset, Dataset};
use tensor::{grayscale_flatten, RawTensor};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "SSQDA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ssqda", version, about = "Sparse quadratic discriminant analysis for elliptical data")]
pub struct Cli {
    /// Worker threads for replications [default: $SSQDA_THREADS or all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replicated comparison of all methods on simulated populations
    Simulate(SimulateArgs),
    /// Write the training and test sets of one simulated replication as CSV
    Generate(GenerateArgs),
    /// Fit a classifier on a labelled CSV file
    Fit(FitArgs),
    /// Classify the rows of a CSV file with a saved model
    Predict(PredictArgs),
    /// Flatten RGB raw tensors into grayscale feature rows
    Preprocess(PreprocessArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Ar1,
    Banded,
    Er,
}

impl From<ModelArg> for PrecisionKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ar1 => PrecisionKind::ar1(),
            ModelArg::Banded => PrecisionKind::Banded,
            ModelArg::Er => PrecisionKind::erdos_renyi(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DistArg {
    Normal,
    T5,
    Mixture,
}

impl From<DistArg> for Family {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::Normal => Family::Normal,
            DistArg::T5 => Family::T5,
            DistArg::Mixture => Family::MixtureNormal,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum MethodArg {
    Ssqda,
    Sdar,
    Slda,
    Lda,
    Qda,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ssqda => Method::Ssqda,
            MethodArg::Sdar => Method::Sdar,
            MethodArg::Slda => Method::Slda,
            MethodArg::Lda => Method::RidgeLda,
            MethodArg::Qda => Method::RidgeQda,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PopulationArgs {
    #[arg(long, value_enum, default_value = "ar1")]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value = "normal")]
    pub dist: DistArg,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    /// Training size per class
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Nonzero entries of the differential matrix
    #[arg(long, default_value_t = 10)]
    pub s1: usize,
    /// Nonzero entries of the discriminant direction
    #[arg(long, default_value_t = 10)]
    pub s2: usize,
    /// Test size per class [default: n]
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TuningArgs {
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Smallest grid constant, in units of the rate scale
    #[arg(long, default_value_t = 0.05)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 5.0)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = 8)]
    pub grid_points: usize,
}

impl TuningArgs {
    fn grid_spec(&self) -> GridSpec {
        GridSpec {
            lo: self.grid_lo,
            hi: self.grid_hi,
            points: self.grid_points,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub population: PopulationArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Use 100 replications unless --reps is given explicitly
    #[arg(long)]
    pub full_scale: bool,
    /// Methods to compare [default: all]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<MethodArg>,
    /// Machine-readable report
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Aligned text table
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub population: PopulationArgs,
    /// Replication index whose draws are written
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Labelled training CSV (labels 1 and 2)
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, value_enum, default_value = "ssqda")]
    pub method: MethodArg,
    /// Output model file
    #[arg(long)]
    pub out: PathBuf,
    /// Differential-matrix constraint; tuned by cross-validation when omitted
    #[arg(long, requires = "lambda2")]
    pub lambda1: Option<f64>,
    /// Direction constraint; tuned by cross-validation when omitted
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Seed of the fold assignment
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with the model's feature columns; a label column enables metrics
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV of predicted labels
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the discriminant score of each row
    #[arg(long)]
    pub scores: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw RGB tensors, one output row each
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Class label attached to every row
    #[arg(long)]
    pub label: Option<usize>,
}

fn experiment_spec(pop: &PopulationArgs, tuning: Option<&TuningArgs>, reps: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(pop.dist.into(), pop.model.into(), pop.p);
    spec.n = pop.n;
    spec.s1 = pop.s1;
    spec.s2 = pop.s2;
    spec.test_size = pop.test_size;
    spec.seed = pop.seed;
    spec.replications = reps;
    if let Some(t) = tuning {
        spec.folds = t.folds;
        spec.grid = t.grid_spec();
    }
    spec
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, explicit_reps: bool) -> Result<()> {
    let reps = if args.full_scale && !explicit_reps { 100 } else { args.reps };
    let spec = experiment_spec(&args.population, Some(&args.tuning), reps);
    let methods: Vec<Method> = if args.methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        args.methods.iter().map(|&m| m.into()).collect()
    };
    let report = run_experiment(&spec, &methods)?;
    let table = report.to_text_table();
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
        write_text(path, &(json + "\n"))?;
    }
    if let Some(path) = &args.table {
        write_text(path, &table)?;
    }
    print!("{table}");
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let spec = experiment_spec(&args.population, None, 1);
    spec.validate()?;
    let data = replicate_data(&spec, args.replication)?;
    save_dataset(&args.train, &Dataset::from_classes(&data.train1, &data.train2)?)?;
    if let Some(path) = &args.test {
        save_dataset(path, &Dataset::from_classes(&data.test1, &data.test2)?)?;
    }
    Ok(())
}

fn check_lambda(name: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(l) if !(l.is_finite() && l >= 0.0) => Err(Error::invalid(format!("{name} must be finite and nonnegative"))),
        other => Ok(other),
    }
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let (train1, train2) = load_dataset(&args.train)?.split_classes()?;
    let method: Method = args.method.into();
    let lambda1 = check_lambda("lambda1", args.lambda1)?;
    let lambda2 = check_lambda("lambda2", args.lambda2)?;
    let opts = FitOptions::default();
    let container = match (method, lambda1, lambda2) {
        (Method::Ssqda, Some(l1), Some(l2)) => {
            ModelContainer::new(FittedModel::Ssqda(fit(&train1, &train2, l1, l2, &opts)?), lambda1, lambda2)
        }
        (Method::Sdar, Some(l1), Some(l2)) => {
            ModelContainer::new(fit_sdar(&train1, &train2, l1, l2, &opts.solver)?.into(), lambda1, lambda2)
        }
        (Method::Slda, _, Some(l2)) => ModelContainer::new(fit_slda(&train1, &train2, l2, &opts.solver)?.into(), None, lambda2),
        _ => {
            let n = train1.n().min(train2.n());
            let t = &args.tuning;
            let tuning = TuningOptions {
                grid: TuningGrid::log_spaced(t.grid_lo, t.grid_hi, t.grid_points, rate_scale(n, train1.p()))?,
                folds: t.folds,
                seed: cv_seed(args.seed, 0),
                fit: opts,
                path_cap: PathCap::default(),
            };
            let tuned = tune_and_fit(method, &train1, &train2, &tuning)?;
            ModelContainer::new(tuned.model, tuned.lambda1, tuned.lambda2)
        }
    };
    container.save(&args.out)?;
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let container = ModelContainer::load(&args.model)?;
    let data = load_dataset(&args.data)?;
    if data.p() != container.p {
        return Err(Error::DimensionMismatch {
            expected: container.p,
            found: data.p(),
        });
    }
    let mut wtr = csv::Writer::from_path(&args.out).map_err(|e| Error::Format(e.to_string()))?;
    let header: &[&str] = if args.scores { &["label", "score"] } else { &["label"] };
    wtr.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
    let mut predicted = Vec::with_capacity(data.n());
    for row in data.features.row_iter() {
        let z = row.transpose();
        let s = container.model.score(&z);
        let label = container.model.classify(&z);
        predicted.push(label);
        let mut rec = vec![label.to_string()];
        if args.scores {
            rec.push(s.to_string());
        }
        wtr.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    wtr.flush()?;
    if let Some(truth) = &data.labels {
        let m = metrics(truth, &predicted)?;
        println!("{}", serde_json::to_string(&m).map_err(|e| Error::Format(e.to_string()))?);
    }
    Ok(())
}

fn cmd_preprocess(args: &PreprocessArgs) -> Result<()> {
    let mut rows = Vec::with_capacity(args.input.len());
    for path in &args.input {
        let image = RawTensor::decode(&std::fs::read(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        rows.push(grayscale_flatten(&image)?);
    }
    let p = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: rows[bad].len(),
        });
    }
    let data = Dataset {
        features: nalgebra::DMatrix::from_row_slice(rows.len(), p, &rows.concat()),
        labels: args.label.map(|l| vec![l; rows.len()]),
    };
    save_dataset(&args.out, &data)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("{THREADS_ENV} must be a positive integer")))?,
            ),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Error::invalid("thread count must be positive"));
    }
    Ok(n)
}

/// Exit status: 0 on success, 2 for usage or validation errors, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

fn run(cli: &Cli, explicit_reps: bool) -> Result<()> {
    if let Some(n) = thread_count(cli.threads)? {
        // A pool already installed by an earlier call in this process is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, explicit_reps),
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Preprocess(a) => cmd_preprocess(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match <Cli as clap::CommandFactory>::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let explicit_reps = matches
        .subcommand_matches("simulate")
        .is_some_and(|m| m.value_source("reps") == Some(clap::parser::ValueSource::CommandLine));
    let cli = match <Cli as clap::FromArgMatches>::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match run(&cli, explicit_reps) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
