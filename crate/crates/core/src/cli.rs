//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::chain::{fit_chain, ChainOrder, FitOptions};
use crate::data::{load_csv, save_csv, standardize_inputs, synth_generate, Dataset, Standardizer, SyntheticSpec};
use crate::detectors::{LofParams, OcsParams};
use crate::error::{Error, Result};
use crate::evalbench::{emit_bar_chart_svg, emit_report_csv, metadata_path, run_benchmark, BenchConfig, TrainingMode};
use crate::model_file::{load_model, save_model};
use crate::rho::transform;
use crate::strategies::{detect, parse_methods, BaggingSpec, DetectorSpec, MethodDefaults, Representation, StrategySpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_CONFIG: i32 = 5;
pub const EXIT_NUMERIC: i32 = 6;

const EXIT_HELP: &str = "\
Exit status:
  0  success
  2  unknown flag or malformed command line
  3  file could not be read or written
  4  malformed dataset, model or report file
  5  invalid or missing parameter (e.g. --representation ours without --model)
  6  numerical failure (non-finite objective, SVM solver out of iterations)";

pub const DEFAULT_METHODS: &str = "ours+lof,lof-joint,lof-out,fb+lof,ours+ocs,ocs-joint,ocs-out,fb+ocs";

#[derive(Debug, Parser)]
#[command(
    name = "condout",
    version,
    about = "Multivariate conditional outlier detection in a chain-model probability space",
    after_help = EXIT_HELP
)]
pub struct Cli {
    /// Worker threads (0 = one per logical core)
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset from a random ground-truth logistic chain
    Synth(SynthArgs),
    /// Fit a chain model to a dataset
    Fit(FitArgs),
    /// Write the conditional-probability (rho) matrix of a dataset
    Transform(TransformArgs),
    /// Score every instance with one detection strategy
    Detect(DetectArgs),
    /// Run the perturbation benchmark over a list of methods
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
#[command(after_help = EXIT_HELP)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    /// Chain coefficients are uniform on [-scale, scale]
    #[arg(long, default_value_t = 3.0)]
    pub coeff_scale: f64,
    /// Number of Gaussian input clusters
    #[arg(long, default_value_t = 1)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset CSV
    #[arg(long, default_value = "synth.csv")]
    pub out: PathBuf,
    /// Output ground-truth model file
    #[arg(long, default_value = "synth.model")]
    pub model_out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Input dataset CSV (header row; trailing --d columns are outputs)
    #[arg(long)]
    pub data: PathBuf,
    /// Number of output columns
    #[arg(long)]
    pub d: usize,
    /// Use inputs as-is instead of standardizing each column
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args, Clone)]
pub struct ChainArgs {
    /// L2 penalty strength on non-bias weights
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Gradient-norm convergence tolerance
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Chain order as comma-separated 0-based output indices (default: natural order)
    #[arg(long)]
    pub order: Option<String>,
}

impl ChainArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            lambda: self.lambda,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    fn chain_order(&self, d: usize) -> Result<ChainOrder> {
        match &self.order {
            None => Ok(ChainOrder::full_chain(d)),
            Some(s) => {
                let order = s
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::InvalidParameter(format!("invalid --order entry '{t}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if order.len() != d {
                    return Err(Error::InvalidParameter(format!(
                        "--order lists {} outputs, dataset has {d}",
                        order.len()
                    )));
                }
                ChainOrder::full_chain_in_order(order)
            }
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct DetectorArgs {
    /// LOF neighbor count
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// One-class SVM nu
    #[arg(long, default_value_t = 0.1)]
    pub nu: f64,
    /// One-class SVM RBF gamma (default: 1 / dimensionality of the detector's space)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// One-class SVM KKT tolerance
    #[arg(long, default_value_t = 1e-6)]
    pub ocs_tol: f64,
    /// One-class SVM iteration budget
    #[arg(long, default_value_t = 10_000_000)]
    pub ocs_max_iter: usize,
    /// Feature-bagging rounds
    #[arg(long, default_value_t = 10)]
    pub fb_rounds: usize,
    /// Space that feature bagging samples features from
    #[arg(long, value_enum, default_value_t = FbSpace::Joint)]
    pub fb_space: FbSpace,
    /// Use the raw [x || y] matrix for JOINT instead of standardizing it
    #[arg(long)]
    pub no_standardize_joint: bool,
}

impl DetectorArgs {
    fn lof(&self) -> LofParams {
        LofParams { k: self.k }
    }

    fn ocs(&self) -> OcsParams {
        OcsParams {
            nu: self.nu,
            gamma: self.gamma,
            solver_tol: self.ocs_tol,
            max_iter: self.ocs_max_iter,
        }
    }

    fn defaults(&self) -> MethodDefaults {
        MethodDefaults {
            lof: self.lof(),
            ocs: self.ocs(),
            fb_rounds: self.fb_rounds,
            fb_space: match self.fb_space {
                FbSpace::Joint => Representation::Joint,
                FbSpace::Out => Representation::Out,
            },
            standardize_joint: !self.no_standardize_joint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FbSpace {
    Joint,
    Out,
}

#[derive(Debug, Args)]
#[command(after_help = EXIT_HELP)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Output model file
    #[arg(long, default_value = "chain.model")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(after_help = EXIT_HELP)]
pub struct TransformArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file written by `fit`
    #[arg(long)]
    pub model: PathBuf,
    /// Output rho CSV
    #[arg(long, default_value = "rho.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RepresentationArg {
    Joint,
    Out,
    Ours,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Lof,
    Ocs,
}

#[derive(Debug, Args)]
#[command(after_help = EXIT_HELP)]
pub struct DetectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = RepresentationArg::Joint)]
    pub representation: RepresentationArg,
    #[arg(long, value_enum, default_value_t = DetectorArg::Lof)]
    pub detector: DetectorArg,
    /// Apply feature bagging (joint or output space only)
    #[arg(long)]
    pub bagging: bool,
    /// Model file; required for --representation ours
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub detector_params: DetectorArgs,
    /// Seed for feature bagging
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output score CSV (instance_index,score)
    #[arg(long, default_value = "scores.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(after_help = EXIT_HELP)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub detector_params: DetectorArgs,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Fraction of instances that get one output bit flipped per repeat
    #[arg(long, default_value_t = 0.01)]
    pub flip_rate: f64,
    /// Comma-separated methods: <rep>+<det>, <det>-<rep> or fb+<det>, rep in {joint,out,ours}, det in {lof,ocs}
    #[arg(long, default_value = DEFAULT_METHODS)]
    pub methods: String,
    /// Master seed; repeat seeds are derived from it
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Data the chain model is trained on in each repeat
    #[arg(long, value_enum, default_value_t = TrainingArg::Transductive)]
    pub training: TrainingArg,
    /// Report CSV; metadata goes to the sibling .meta.txt file
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
    /// Bar chart SVG
    #[arg(long, default_value = "report.svg")]
    pub svg: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainingArg {
    Transductive,
    Clean,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Csv(e) if e.is_io_error() => EXIT_IO,
        Error::Csv(_)
        | Error::NonBinaryOutput { .. }
        | Error::NonNumericInput { .. }
        | Error::NonFiniteInput { .. }
        | Error::TooFewColumns { .. }
        | Error::RaggedRow { .. }
        | Error::EmptyDataset
        | Error::ModelFormat { .. } => EXIT_DATA,
        Error::DimensionMismatch(_)
        | Error::InvalidParameter(_)
        | Error::MissingModel
        | Error::DegenerateLabels => EXIT_CONFIG,
        Error::NonFiniteObjective { .. } | Error::SolverNotConverged { .. } => EXIT_NUMERIC,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("invalid command line");
            eprintln!("condout: {}", line.trim_start_matches("error: "));
            return EXIT_USAGE;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("condout: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Transform(a) => transform_cmd(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Bench(a) => bench(a),
    })
}

fn write_text(path: &Path, text: &[u8]) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n: a.n,
        m: a.m,
        d: a.d,
        chain_coeff_scale: a.coeff_scale,
        input_cluster_count: a.clusters,
        seed: a.seed,
    };
    let (ds, truth) = synth_generate(&spec)?;
    save_csv(&ds, &a.out)?;
    save_model(&a.model_out, &truth, None)?;
    eprintln!(
        "wrote {} ({}x{} inputs, {} outputs) and {}",
        a.out.display(),
        ds.n(),
        ds.m(),
        ds.d(),
        a.model_out.display()
    );
    Ok(())
}

/// Loads the dataset and, unless disabled, standardizes its inputs.
fn load_dataset(a: &DataArgs) -> Result<(Dataset, Option<Standardizer>)> {
    let ds = load_csv(&a.data, a.d)?;
    if a.no_standardize {
        Ok((ds, None))
    } else {
        let (z, scaler) = standardize_inputs(&ds)?;
        Ok((z, Some(scaler)))
    }
}

/// Loads the dataset and applies the scaler stored with a model, if any.
fn load_for_model(a: &DataArgs, scaler: Option<&Standardizer>) -> Result<Dataset> {
    let ds = load_csv(&a.data, a.d)?;
    match scaler {
        Some(sc) => Dataset::new(
            sc.apply(ds.inputs())?,
            ds.outputs().clone(),
            ds.feature_names().to_vec(),
            ds.label_names().to_vec(),
        ),
        None => Ok(ds),
    }
}

fn fit(a: &FitArgs) -> Result<()> {
    let (ds, scaler) = load_dataset(&a.data)?;
    let order = a.chain.chain_order(ds.d())?;
    let model = fit_chain(&ds, &order, &a.chain.options())?;
    save_model(&a.out, &model, scaler.as_ref())?;
    let unconverged = model.diagnostics().iter().filter(|d| !d.converged).count();
    eprintln!(
        "wrote {} ({} outputs, {} not converged)",
        a.out.display(),
        model.output_dim(),
        unconverged
    );
    Ok(())
}

fn transform_cmd(a: &TransformArgs) -> Result<()> {
    let (model, scaler) = load_model(&a.model)?;
    let ds = load_for_model(&a.data, scaler.as_ref())?;
    let rho = transform(&model, &ds)?;
    rho.save_csv(&a.out, ds.label_names())?;
    eprintln!("wrote {} ({}x{})", a.out.display(), rho.n(), rho.d());
    Ok(())
}

fn detect_cmd(a: &DetectArgs) -> Result<()> {
    let representation = match a.representation {
        RepresentationArg::Joint => Representation::Joint,
        RepresentationArg::Out => Representation::Out,
        RepresentationArg::Ours => Representation::Ours,
    };
    if representation == Representation::Ours && a.model.is_none() {
        return Err(Error::InvalidParameter(
            "--representation ours requires --model".into(),
        ));
    }
    let dp = &a.detector_params;
    let detector = match a.detector {
        DetectorArg::Lof => DetectorSpec::Lof(dp.lof()),
        DetectorArg::Ocs => DetectorSpec::Ocs(dp.ocs()),
    };
    let spec = StrategySpec {
        representation,
        detector,
        bagging: a.bagging.then_some(BaggingSpec {
            rounds: dp.fb_rounds,
            seed: a.seed,
        }),
        standardize_joint: !dp.no_standardize_joint,
    };
    spec.validate()?;

    let (ds, model) = match &a.model {
        Some(path) => {
            let (model, scaler) = load_model(path)?;
            (load_for_model(&a.data, scaler.as_ref())?, Some(model))
        }
        None => (load_dataset(&a.data)?.0, None),
    };
    let scores = detect(&spec, &ds, model.as_ref())?;
    let mut buf = Vec::new();
    scores.write_csv(&mut buf).expect("writing to a Vec cannot fail");
    write_text(&a.out, &buf)?;
    eprintln!("wrote {} ({} scores, {})", a.out.display(), scores.len(), spec.name());
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let methods = parse_methods(&a.methods, &a.detector_params.defaults())?;
    let ds = load_csv(&a.data.data, a.data.d)?;
    let order = match &a.chain.order {
        Some(_) => Some(a.chain.chain_order(ds.d())?),
        None => None,
    };
    let cfg = BenchConfig {
        repeats: a.repeats,
        flip_rate: a.flip_rate,
        master_seed: a.seed,
        fit: a.chain.options(),
        order,
        standardize_inputs: !a.data.no_standardize,
        training: match a.training {
            TrainingArg::Transductive => TrainingMode::Transductive,
            TrainingArg::Clean => TrainingMode::Clean,
        },
    };
    let report = run_benchmark(&ds, &methods, &cfg)?;
    emit_report_csv(&report, &a.out)?;
    emit_bar_chart_svg(&report, &a.svg)?;

    let mut out = std::io::stdout().lock();
    for rec in &report.records {
        let _ = writeln!(out, "{:<12} mean AUC {:.4}  s.e. {:.4}", rec.name, rec.mean, rec.stderr);
    }
    eprintln!(
        "wrote {}, {} and {}",
        a.out.display(),
        metadata_path(&a.out).display(),
        a.svg.display()
    );
    Ok(())
}
