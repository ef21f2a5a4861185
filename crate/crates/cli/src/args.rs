use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "delaykit",
    version,
    about = "Compile, simulate and continue delay and renewal equations"
)]
pub struct Cli {
    /// Model file (`.de`) or compiled-system JSON.
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,

    /// Main output file; standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Reserved; every computation is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a model file into a compiled-system description (JSON).
    Compile(CompileArgs),
    /// Integrate from a history; optional event detection.
    Simulate(SimulateArgs),
    /// Continue an equilibrium in one parameter.
    EqContinue(EqContinueArgs),
    /// Continue a periodic orbit from a Hopf or period-doubling row.
    LcContinue(LcContinueArgs),
    /// Lyapunov exponents along one orbit.
    Lyap(LyapArgs),
    /// Lyapunov exponents over a list of parameter values.
    LyapSweep(LyapSweepArgs),
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    /// Collocation degree M (overrides the model file).
    #[arg(short = 'M', long = "degree")]
    pub m: Option<usize>,
    /// Quadrature degree Q (defaults to M).
    #[arg(short = 'Q', long = "quadrature-degree")]
    pub q: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    /// Parameter assignment; overrides the model-file default.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StateArgs {
    /// History of one coordinate: a constant or an expression in `theta`
    /// and the parameters.
    #[arg(long = "history", value_name = "COORD=EXPR")]
    pub history: Vec<String>,

    /// Full state vector instead of histories.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        conflicts_with = "history",
        value_name = "V1,V2,..."
    )]
    pub init: Option<Vec<f64>>,

    /// Override one state entry after the state has been built.
    #[arg(long = "state", value_name = "LABEL=VALUE")]
    pub state: Vec<String>,
}

#[derive(Debug, Args)]
pub struct IvpArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub abs_tol: f64,
    /// Largest integration step.
    #[arg(long)]
    pub max_step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub ivp: IvpArgs,

    /// Final time.
    #[arg(long)]
    pub t_max: f64,

    /// Sample the trajectory every `dt` (dense output) instead of writing
    /// the accepted steps.
    #[arg(long)]
    pub dt: Option<f64>,

    /// Event function over state labels and parameters, e.g. `x_aux02+0.2`.
    #[arg(long = "event", value_name = "EXPR", requires = "events_out")]
    pub events: Vec<String>,

    /// Crossing direction per event (+1, -1 or 0); a single value applies
    /// to all events.
    #[arg(long = "direction", allow_negative_numbers = true, value_parser = clap::value_parser!(i8).range(-1..=1))]
    pub directions: Vec<i8>,

    /// Where to write detected events.
    #[arg(long, value_name = "PATH")]
    pub events_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StepArgs {
    #[arg(long, default_value_t = 0.01)]
    pub init_step: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub min_step: f64,
    #[arg(long, default_value_t = 0.5)]
    pub max_step: f64,
    #[arg(long, default_value_t = 100)]
    pub max_points: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub corrector_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub test_tol: f64,
    /// Start by decreasing the parameter.
    #[arg(long)]
    pub backward: bool,
    /// Stop once the parameter falls below this value.
    #[arg(long, allow_negative_numbers = true)]
    pub p_min: Option<f64>,
    /// Stop once the parameter exceeds this value.
    #[arg(long, allow_negative_numbers = true)]
    pub p_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EqContinueArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Equilibrium guess, given as a history or a state vector.
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub steps: StepArgs,
    /// Active parameter.
    #[arg(long)]
    pub param: String,
}

#[derive(Debug, Args)]
pub struct LcContinueArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub steps: StepArgs,
    /// Branch file (CSV or JSON) holding the start row.
    #[arg(long, value_name = "PATH")]
    pub from: PathBuf,
    /// Start row: an event tag (`H`, `PD`) or the index of a cycle point.
    #[arg(long, default_value = "H")]
    pub start: String,
    /// Which row with that tag, counting from 1.
    #[arg(long, default_value_t = 1)]
    pub occurrence: usize,
    /// Initial amplitude of the emerging orbit.
    #[arg(long, default_value_t = 0.01)]
    pub amplitude: f64,
    /// Shooting tolerances.
    #[arg(long, default_value_t = 1e-10)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub abs_tol: f64,
}

#[derive(Debug, Args)]
pub struct LyapOptions {
    /// Total integration time, transient included.
    #[arg(long, default_value_t = 1000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 100.0)]
    pub transient: f64,
    #[arg(long, default_value_t = 1.0)]
    pub renorm_interval: f64,
    /// Number of exponents to compute (all by default).
    #[arg(long)]
    pub k: Option<usize>,
    /// Write only the `top` largest exponents.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LyapArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub ivp: IvpArgs,
    #[command(flatten)]
    pub lyap: LyapOptions,
}

#[derive(Debug, Args)]
pub struct LyapSweepArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub ivp: IvpArgs,
    #[command(flatten)]
    pub lyap: LyapOptions,
    /// Swept parameter.
    #[arg(long)]
    pub param: String,
    /// Explicit parameter values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required_unless_present = "range")]
    pub values: Vec<f64>,
    /// Evenly spaced values `START:STOP:STEP`, both ends included.
    #[arg(long, conflicts_with = "values", value_name = "START:STOP:STEP")]
    pub range: Option<String>,
    /// Restart every value from the initial state instead of the final
    /// state of the previous value.
    #[arg(long)]
    pub no_carry: bool,
}
