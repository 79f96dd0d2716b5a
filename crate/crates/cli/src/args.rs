use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netlocal::optimizer::{SolverSettings, EJM_RMSE_THRESHOLD};

#[derive(Parser, Debug)]
#[command(
    name = "netlocal",
    version,
    about = "Local hidden-variable models for network Bell scenarios"
)]
pub struct Cli {
    /// Worker threads (default: all available). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model to one target and print the result as JSON.
    Fit(FitArgs),
    /// Fit a visibility family at several visibilities; CSV output.
    Sweep(SweepArgs),
    /// Fit a bilocal slice on a square grid; CSV output.
    Grid(GridArgs),
    /// Bisect for the largest visibility that still fits.
    CriticalV(CriticalArgs),
    /// Critical EJM visibilities over cardinality triples; CSV output.
    EjmTable(EjmTableArgs),
    /// Upper bound on the useful cardinality of one source.
    Bound(BoundArgs),
    /// Check that a model file reproduces a target.
    Verify(VerifyArgs),
    /// Write one of the built-in exact models as JSON.
    ExportModel(ExportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Network {
    Bilocal,
    Triangle,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Ghz,
    W,
    Ejm,
    BilocalIj,
    BilocalXy,
    /// Behaviour JSON given by --target-file.
    File,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridPreset {
    /// 41 × 41 points on [−1, 1]².
    Dense,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportName {
    Ghz222,
    Ghz322,
    Ghz333,
    W,
    BilocalBoundary,
}

#[derive(Args, Debug)]
pub struct NetworkArgs {
    /// Named scenario; inferred from the target when omitted.
    #[arg(long, value_enum)]
    pub network: Option<Network>,
    /// Topology JSON file with "outputs", "inputs" and "wiring".
    #[arg(long, value_name = "FILE")]
    pub topology: Option<PathBuf>,
    /// Outputs per party for the triangle (default 2, or 4 for ejm).
    #[arg(long)]
    pub outputs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TargetArgs {
    #[arg(long, visible_alias = "family", value_enum)]
    pub target: Target,
    /// Visibility for ghz, w and ejm (verify also accepts "auto").
    #[arg(long)]
    pub v: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub i: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub j: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub target_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SolverArgs {
    /// Source cardinalities, comma separated (e.g. 3,2,2).
    #[arg(long, value_delimiter = ',', required = true)]
    pub cards: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub restarts: usize,
    #[arg(long, env = "NETLOCAL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub gtol: f64,
    /// Perturb-and-resolve rounds per restart.
    #[arg(long, default_value_t = 100)]
    pub hops: usize,
    /// Skip the remaining restarts once one meets the threshold.
    #[arg(long)]
    pub stop_on_success: bool,
}

impl SolverArgs {
    pub fn settings(&self, threshold: f64) -> SolverSettings {
        SolverSettings {
            restarts: self.restarts,
            max_iterations: self.max_iter,
            gtol: self.gtol,
            success_rmse: threshold,
            master_seed: self.seed,
            hops: self.hops,
            stop_on_success: self.stop_on_success,
            ..SolverSettings::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Success RMSE (default 1e-6, or 1e-4 for ejm).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, visible_alias = "family", value_enum)]
    pub target: Target,
    /// Explicit visibilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub v_list: Option<Vec<f64>>,
    #[arg(long)]
    pub v_min: Option<f64>,
    #[arg(long)]
    pub v_max: Option<f64>,
    /// Number of evenly spaced visibilities between --v-min and --v-max.
    #[arg(long, default_value_t = 11)]
    pub points: usize,
    /// Start restart 0 of each point from the previous point's best model.
    #[arg(long)]
    pub warm_start: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, visible_alias = "family", value_enum)]
    pub target: Target,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub max: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 9)]
    pub points: usize,
    /// Overrides --min, --max and --points.
    #[arg(long, value_enum)]
    pub preset: Option<GridPreset>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CriticalArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, visible_alias = "family", value_enum)]
    pub target: Target,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub v_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub v_hi: f64,
    #[arg(long, default_value_t = 0.01)]
    pub v_tol: f64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct CardList(pub Vec<usize>);

fn parse_card_list(s: &str) -> Result<CardList, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(CardList)
}

#[derive(Args, Debug)]
pub struct EjmTableArgs {
    /// Largest cardinality; every triple c_max ≥ c_α ≥ c_β ≥ c_γ ≥ 2.
    #[arg(long, default_value_t = 4)]
    pub c_max: usize,
    /// Single triple such as 4,4,4; repeatable. Overrides --c-max.
    #[arg(long, value_parser = parse_card_list)]
    pub cell: Vec<CardList>,
    #[arg(long, default_value_t = EJM_RMSE_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0.01)]
    pub v_tol: f64,
    #[arg(long, default_value_t = 50)]
    pub restarts: usize,
    #[arg(long, env = "NETLOCAL_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub gtol: f64,
    #[arg(long, default_value_t = 100)]
    pub hops: usize,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

impl EjmTableArgs {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            restarts: self.restarts,
            max_iterations: self.max_iter,
            gtol: self.gtol,
            success_rmse: self.threshold,
            master_seed: self.seed,
            hops: self.hops,
            ..SolverSettings::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    /// Source index.
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Model JSON file.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
    /// Largest accepted RMSE.
    #[arg(long, default_value_t = 1e-10)]
    pub threshold: f64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long, value_enum)]
    pub name: ExportName,
    /// Visibility for ghz322 and w (w defaults to its critical value), or X
    /// for bilocal-boundary.
    #[arg(long, allow_hyphen_values = true)]
    pub param: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
