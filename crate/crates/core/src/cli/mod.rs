//! Command-line front end: argument parsing, model resolution and dispatch.

mod commands;
pub mod emit;

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::InteractionModel;
use crate::state_space::{StateSpace, SymTensor};

pub use commands::{default_density, product_observable};
pub use emit::{Cell, Format, Table};

/// Environment variable capping the worker pool size; `0` means automatic.
pub const THREADS_ENV: &str = "ENTITY_KINETICS_THREADS";

/// `ε` used with `--builtin` when none is given.
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(name = "entity-kinetics", version, about = "Kinetic hierarchies and mean-field limits of interacting entity jump processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Dual BBGKY hierarchy: cumulant expansion against RK4.
    Hierarchy(HierarchyArgs),
    /// Mean-field convergence sweep and chaos identity residuals.
    Meanfield(MeanfieldArgs),
    /// Vlasov equation by RK4 and by the iterated-integral series.
    Vlasov(VlasovArgs),
    /// Stochastic simulation of the N-entity process.
    Ssa(SsaArgs),
    /// Duality and consistency residuals of grand-canonical mean values.
    Functionals(FunctionalsArgs),
    /// Validate a model; optionally dump a generator matrix.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["builtin", "model"])))]
pub struct ModelArgs {
    /// Builtin model: uniform-drift, imitation or mixed.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Model file (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Subpopulations, for builtins.
    #[arg(long = "M", default_value_t = 2)]
    #[serde(rename = "M")]
    pub subpopulations: usize,
    /// Micro-states per subpopulation, for builtins.
    #[arg(long = "K", default_value_t = 2)]
    #[serde(rename = "K")]
    pub micro_states: usize,
    /// Scaling parameter; overrides the file value.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl ModelArgs {
    pub fn resolve(&self, default_epsilon: f64) -> Result<InteractionModel> {
        let model = match (&self.builtin, &self.model) {
            (Some(name), _) => {
                let space = StateSpace::new(self.subpopulations, self.micro_states)?;
                InteractionModel::builtin(name, space, self.epsilon.unwrap_or(default_epsilon))?
            }
            (None, Some(path)) => {
                let m = InteractionModel::load(path)?;
                match self.epsilon {
                    Some(e) => m.with_epsilon(e),
                    None => m,
                }
            }
            (None, None) => return Err(Error::InvalidArgument("need --builtin or --model".into())),
        };
        if !(model.epsilon().is_finite() && model.epsilon() >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be finite and >= 0, got {}",
                model.epsilon()
            )));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HierarchyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 3)]
    pub smax: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Number of output times after t = 0.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MeanfieldArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025")]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value_t = 3)]
    pub smax: usize,
    #[arg(long, default_value_t = crate::meanfield::DEFAULT_NODES)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub series_nmax: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Largest truncation in the chaos table.
    #[arg(long, default_value_t = 4)]
    pub chaos_smax: usize,
    /// Initial one-entity density, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub density: Option<Vec<f64>>,
    /// Where to write the chaos table; skipped when absent.
    #[arg(long)]
    #[serde(skip)]
    pub chaos_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VlasovArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 3)]
    pub series_nmax: usize,
    #[arg(long, default_value_t = crate::meanfield::DEFAULT_NODES)]
    pub nodes: usize,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, value_delimiter = ',')]
    pub density: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SsaArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of entities; `ε` defaults to `1/N`.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub entities: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Step of the Vlasov reference solution.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, value_delimiter = ',')]
    pub density: Option<Vec<f64>>,
    /// Where to write per-replica summaries; skipped when absent.
    #[arg(long)]
    #[serde(skip)]
    pub replicas_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Report {
    Duality,
    Consistency,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FunctionalsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Report::Duality)]
    pub report: Report,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Truncation of the grand-canonical sequences.
    #[arg(long, default_value_t = crate::functionals::DEFAULT_NMAX)]
    pub nmax: usize,
    /// Marginal truncation for the consistency report.
    #[arg(long, default_value_t = 2)]
    pub smax: usize,
    /// Activity of the Poisson-type state `D_n = λ^n f^{⊗n}`.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, value_delimiter = ',')]
    pub density: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Write the matrix of `Λ_n` as CSV.
    #[arg(long)]
    pub dump_generator: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Exit code for an error: 2 for invariant violations, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invariant(_) => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={raw} is not a count")))?;
    if n > 0 {
        // A pool built earlier in the process wins; that only happens in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Resolved configuration recorded in every artifact.
pub(crate) fn config_header(command: &Command, model: &InteractionModel) -> Value {
    let args = serde_json::to_value(command).unwrap_or(Value::Null);
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": args,
        "resolved": {
            "M": model.space().subpopulations(),
            "K": model.space().micro_states(),
            "m_max": model.max_order(),
            "epsilon": model.epsilon(),
        }
    })
}

pub(crate) fn density_arg(model: &InteractionModel, raw: &Option<Vec<f64>>) -> Result<SymTensor> {
    match raw {
        None => default_density(*model.space()),
        Some(v) => {
            let f = SymTensor::from_vec(*model.space(), 1, v.clone())?;
            if f.min() < 0.0 || (f.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(
                    "--density must be nonnegative and sum to 1".into(),
                ));
            }
            Ok(f)
        }
    }
}

/// Execute a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Hierarchy(a) => commands::hierarchy(&cli.command, a),
        Command::Meanfield(a) => commands::meanfield(&cli.command, a),
        Command::Vlasov(a) => commands::vlasov(&cli.command, a),
        Command::Ssa(a) => commands::ssa(&cli.command, a),
        Command::Functionals(a) => commands::functionals(&cli.command, a),
        Command::Validate(a) => commands::validate(&cli.command, a),
    }
}
