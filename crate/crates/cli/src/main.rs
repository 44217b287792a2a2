//! `mgpi`: generate games, run the planners, and write traces and reports.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mgpi::Rollout;
use serde::Serialize;

const EXIT_CODES: &str = "\
Exit codes:
  0   success (for solve: the planner converged)
  1   unreadable, malformed or invalid input, or a failed computation
  2   naive policy iteration cycled (solve --algo naive; search-naive found an instance)
  3   the iteration budget ran out before the stopping rule held
  64  usage error

Environment:
  MGPI_SEED   overrides --seed (and --first-seed for search-naive)";

#[derive(Debug, Parser)]
#[command(name = "mgpi", version, about = "Policy iteration with lookahead for zero-sum Markov games", after_help = EXIT_CODES)]
struct Cli {
    /// Cap the number of worker threads. Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Leave wall-clock fields out of every output.
    #[arg(long, global = true)]
    omit_timing: bool,

    /// Manifest destination; defaults to `<primary output>.manifest.json`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded random game.
    Gen(GenArgs),
    /// Run one planner on a game.
    Solve(SolveArgs),
    /// Run several planner configurations and tabulate their work.
    Compare(CompareArgs),
    /// Estimate the game from a generative sampler, plan on it, and score the plan.
    Rl(RlArgs),
    /// Approximate policy iteration over state features.
    Fa(FaArgs),
    /// Policy iteration on a linear game through its anchor tuples.
    Linear(LinearArgs),
    /// Policy iteration with simulated rollouts.
    Stochastic(StochasticArgs),
    /// Look for games on which naive policy iteration cycles.
    SearchNaive(SearchArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub states: usize,
    /// Largest action count per player.
    #[arg(long, default_value_t = 2)]
    pub actions: usize,
    #[arg(long, default_value_t = 1)]
    pub min_actions: usize,
    /// 0 gives deterministic transitions, 1 lets every triple reach every state.
    #[arg(long, default_value_t = 1.0)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 0.9)]
    pub discount: f64,
    /// Give the minimizer a single action everywhere.
    #[arg(long)]
    pub mdp: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Vi,
    Gpi,
    Naive,
    Hk,
}

#[derive(Debug, Args, Serialize)]
#[command(after_help = EXIT_CODES)]
pub struct SolveArgs {
    pub game: PathBuf,
    #[arg(long, value_enum, default_value_t = Algo::Gpi)]
    pub algo: Algo,
    /// Rollout depth: a count or `inf`.
    #[arg(long, default_value = "inf")]
    pub m: Rollout,
    /// Lookahead depth for gpi; the smallest depth meeting the rate condition by default.
    #[arg(long = "H")]
    pub h: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Compute the game value first and record sup errors in the trace.
    #[arg(long)]
    pub reference: bool,
    /// Trace CSV destination.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Value and policy JSON destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    pub game: PathBuf,
    /// Configurations such as `vi`, `hk`, `naive:m=inf` or `gpi:m=3,H=4`
    /// (keys m, H, tol, max_iters).
    pub configs: Vec<String>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RlArgs {
    pub game: PathBuf,
    /// Samples per (s,u,v); a comma-separated list runs a sweep.
    #[arg(long = "N", required = true, value_delimiter = ',')]
    pub n: Vec<u64>,
    #[arg(long, default_value = "3")]
    pub m: Rollout,
    #[arg(long = "H")]
    pub h: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Planning accuracy on the estimated model.
    #[arg(long, default_value_t = 1e-6)]
    pub eps_opt: f64,
    /// Target accuracy and confidence for the sample-count formula.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Report JSON destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FaArgs {
    pub game: PathBuf,
    /// Feature file `{"d", "phi", "anchors"}`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value = "inf")]
    pub m: Rollout,
    #[arg(long = "H")]
    pub h: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    #[arg(long)]
    pub reference: bool,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(after_help = EXIT_CODES)]
pub struct LinearArgs {
    /// Linear model file `{"d", "features", "theta", "eta", "anchors"}`.
    pub model: PathBuf,
    /// The model file carries no discount factor.
    #[arg(long)]
    pub discount: f64,
    #[arg(long, default_value = "1")]
    pub m: Rollout,
    #[arg(long = "H", default_value_t = 1)]
    pub h: usize,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    /// Stop once the anchor residual is this small; running out of iterations then exits 3.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub reference: bool,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StochasticArgs {
    pub game: PathBuf,
    /// Feature file; one feature per state when absent.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long = "H", default_value_t = 1)]
    pub h: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw this many uniform start states per iteration instead of one per state.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Step sizes c/(k+1)^p.
    #[arg(long, default_value_t = 1.0)]
    pub step_c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step_p: f64,
    /// Track the projection diagnostics (one policy evaluation per iteration).
    #[arg(long)]
    pub diagnostics: bool,
    #[arg(long)]
    pub reference: bool,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(after_help = EXIT_CODES)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub games: u64,
    #[arg(long, default_value_t = 2)]
    pub min_states: usize,
    #[arg(long, default_value_t = 3)]
    pub max_states: usize,
    #[arg(long, default_value_t = 3)]
    pub max_actions: usize,
    #[arg(long, default_value_t = 0.9)]
    pub discount: f64,
    #[arg(long, default_value = "inf")]
    pub m: Rollout,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// JSON-lines archive of cycling instances.
    #[arg(long)]
    pub archive: PathBuf,
    /// Summary JSON destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Why a command could not finish.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Input(String),
}

impl From<mgpi::Error> for Failure {
    fn from(e: mgpi::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

/// How a finished command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    Cycling,
    MaxIters,
}

/// Options shared by every subcommand.
pub struct Context {
    pub omit_timing: bool,
    pub manifest: Option<PathBuf>,
}

impl Context {
    /// Manifest location for a command whose main output is `primary`.
    pub fn manifest_path(&self, primary: Option<&PathBuf>) -> Option<PathBuf> {
        self.manifest.clone().or_else(|| primary.map(|p| manifest::default_path(p)))
    }
}

fn run(cli: Cli) -> Result<Status, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let ctx = Context { omit_timing: cli.omit_timing, manifest: cli.manifest };
    match cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Solve(a) => commands::solve(&ctx, a),
        Command::Compare(a) => commands::compare(&ctx, a),
        Command::Rl(a) => commands::rl(&ctx, a),
        Command::Fa(a) => commands::fa(&ctx, a),
        Command::Linear(a) => commands::linear(&ctx, a),
        Command::Stochastic(a) => commands::stochastic(&ctx, a),
        Command::SearchNaive(a) => commands::search_naive(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Cycling) => ExitCode::from(2),
        Ok(Status::MaxIters) => ExitCode::from(3),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(64)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
