use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsdemix::detect::Method;
use hsdemix::guarantees::DEFAULT_RANK_TOL;
use hsdemix::solver::ApgConfig;
use hsdemix::synth::DictionaryKind;
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "hsdemix", version, about = "Low-rank plus dictionary-sparse demixing and target detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Prefix of every file written by the run.
    #[arg(long, global = true, default_value = "hsdemix")]
    pub out_prefix: PathBuf,

    /// Matrix output format.
    #[arg(long, global = true, value_enum, default_value_t = MatrixFormat::Csv)]
    pub format: MatrixFormat,

    /// Worker threads for the lambda sweep; 0 picks the number of CPUs.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    Csv,
    F32,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Split Y into a low-rank part and a dictionary-sparse part.
    Demix(DemixArgs),
    /// Score voxels against a dictionary and evaluate against a ground-truth mask.
    Detect(DetectArgs),
    /// Compute the recovery-guarantee report of known components.
    Diagnose(DiagnoseArgs),
    /// Build a dictionary from labelled voxels.
    #[command(subcommand)]
    Dict(DictCommand),
    /// Generate a synthetic instance with known components.
    Synth(SynthArgs),
    /// Compare every detection method in one table.
    RocTable(RocTableArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Demix(_) => "demix",
            Command::Detect(_) => "detect",
            Command::Diagnose(_) => "diagnose",
            Command::Dict(DictCommand::Sample(_)) => "dict sample",
            Command::Dict(DictCommand::Learn(_)) => "dict learn",
            Command::Synth(_) => "synth",
            Command::RocTable(_) => "roc-table",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Dict(DictCommand::Sample(a)) => Some(a.seed),
            Command::Dict(DictCommand::Learn(a)) => Some(a.seed),
            Command::Synth(a) => Some(a.seed),
            _ => None,
        }
    }
}

/// Data matrix and dictionary shared by the solving subcommands.
#[derive(Debug, Args, Serialize)]
pub struct ProblemArgs {
    /// Data: a `.csv` matrix (bands by voxels), an f32 matrix or an f32 cube (stem, `.f32` or `.json`).
    #[arg(long)]
    pub y: PathBuf,

    /// Dictionary matrix (bands by atoms); atoms are normalized on load.
    #[arg(long)]
    pub dict: PathBuf,

    /// Divide data and dictionary by the largest absolute data entry first.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SolverArgs {
    /// Continuation factor in (0, 1).
    #[arg(long = "v", default_value_t = ApgConfig::default().continuation)]
    pub continuation: f64,

    /// Initial smoothing weight; defaults to the spectral norm of the data.
    #[arg(long)]
    pub nu_init: Option<f64>,

    #[arg(long, default_value_t = ApgConfig::default().nu_floor)]
    pub nu_floor: f64,

    /// Iteration cap per continuation stage.
    #[arg(long, default_value_t = ApgConfig::default().max_iters)]
    pub max_iters: usize,

    #[arg(long, default_value_t = ApgConfig::default().rel_tol)]
    pub rel_tol: f64,
}

impl SolverArgs {
    pub fn config(&self, lambda: f64) -> ApgConfig {
        ApgConfig {
            continuation: self.continuation,
            nu_init: self.nu_init,
            nu_floor: self.nu_floor,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            lambda,
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("lambda_choice").required(true).args(["lambda", "lambda_grid"]))]
pub struct DemixArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Sparsity weight.
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Solve at N evenly spaced values up to the sweep endpoint instead.
    #[arg(long, value_name = "N")]
    pub lambda_grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Xpra,
    RpcaDagger,
    Mf,
    MfDagger,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Xpra => Method::Xpra,
            MethodArg::RpcaDagger => Method::RpcaDagger,
            MethodArg::Mf => Method::Mf,
            MethodArg::MfDagger => Method::MfDagger,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct MaskArgs {
    /// Ground-truth class labels, one integer per voxel in unfolding order.
    #[arg(long)]
    pub mask: PathBuf,

    /// Label of the target class.
    #[arg(long, default_value_t = 16, allow_negative_numbers = true)]
    pub positive_class: i64,
}

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[command(flatten)]
    pub mask: MaskArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(long, value_enum)]
    pub method: MethodArg,

    /// Number of lambda values swept by the solver-based methods.
    #[arg(long, value_name = "N", default_value_t = 100)]
    pub lambda_grid: usize,

    /// Evaluate negated scores when they separate the classes better.
    #[arg(long)]
    pub allow_flip: bool,

    /// Also write the detections at the best operating point as a mask.
    #[arg(long)]
    pub emit_mask: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct RocTableArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[command(flatten)]
    pub mask: MaskArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Methods to compare, in row order.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Xpra, MethodArg::RpcaDagger, MethodArg::Mf, MethodArg::MfDagger])]
    pub methods: Vec<MethodArg>,

    #[arg(long, value_name = "N", default_value_t = 100)]
    pub lambda_grid: usize,

    #[arg(long)]
    pub allow_flip: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    /// Low-rank component (bands by voxels).
    #[arg(long)]
    pub x0: PathBuf,

    /// Sparse coefficients (atoms by voxels).
    #[arg(long)]
    pub a0: PathBuf,

    #[arg(long)]
    pub dict: PathBuf,

    /// Singular values below this fraction of the largest do not count towards the rank.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictCommand {
    /// Pick atoms uniformly among target voxels.
    Sample(DictSampleArgs),
    /// Learn atoms from target voxels by sparse coding.
    Learn(DictLearnArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DictSourceArgs {
    #[arg(long)]
    pub y: PathBuf,

    #[command(flatten)]
    pub mask: MaskArgs,

    /// Number of atoms.
    #[arg(long)]
    pub d: usize,

    /// Divide the data by its largest absolute entry first.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DictSampleArgs {
    #[command(flatten)]
    pub source: DictSourceArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct DictLearnArgs {
    #[command(flatten)]
    pub source: DictSourceArgs,

    /// Sparse-coding penalty.
    #[arg(long)]
    pub rho: f64,

    /// Outer alternating rounds.
    #[arg(long, default_value_t = 50)]
    pub iters: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    GaussianNormalized,
    OrthonormalColumns,
}

impl From<KindArg> for DictionaryKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::GaussianNormalized => DictionaryKind::GaussianNormalized,
            KindArg::OrthonormalColumns => DictionaryKind::OrthonormalColumns,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Bands.
    #[arg(long)]
    pub f: usize,
    /// Voxels.
    #[arg(long)]
    pub nm: usize,
    /// Rank of the low-rank part.
    #[arg(long)]
    pub r: usize,
    /// Atoms.
    #[arg(long)]
    pub d: usize,
    /// Nonzero coefficients.
    #[arg(long)]
    pub s: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = KindArg::GaussianNormalized)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 0.5)]
    pub magnitude_low: f64,
    #[arg(long, default_value_t = 1.5)]
    pub magnitude_high: f64,
}
