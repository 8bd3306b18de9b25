//! `supershadow`: batch runner for the shadowing laboratory.

mod commands;
mod config;
mod demos;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_entries, DensityKind, Entry, ExperimentConfig, Format};
use demos::DemoName;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("demo assertion failed: {0}")]
    Demo(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Demo(_) => 3,
        }
    }
}

impl From<supershadow::Error> for CliError {
    fn from(e: supershadow::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

const EXIT_CODES: &str = "Exit codes: 0 success, 1 invalid configuration or input, 2 numerical failure, 3 demo assertion failed.

Configuration: --config FILE reads a TOML file whose keys are the long flag names in snake_case \
(plus [generator] for generator parameters and [[targets]] for corollary balls). \
Flags override the file, the file overrides built-in defaults. Unknown keys are rejected.";

/// One JSON value per flag; the alias keeps clap from treating it as repeated.
type Entries = Vec<Entry>;

#[derive(Debug, Parser)]
#[command(name = "supershadow", version, about = "Shadowing and super-shadowing experiments for complex matrices", after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Flags {
    /// TOML experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Operator JSON file.
    #[arg(long, global = true)]
    operator: Option<PathBuf>,
    /// Trajectory JSON file (otherwise one is generated).
    #[arg(long, global = true)]
    trajectory: Option<PathBuf>,
    /// Generator kind: random, rotation-linear, jordan-impulse, harmonic-pair,
    /// jordan-harmonic, isometry-walk, harmonic-bilateral, compact-probe.
    #[arg(long, global = true)]
    kind: Option<String>,
    /// Generator parameter KEY=VALUE, VALUE in JSON (e.g. beta=[0,1]). Repeatable.
    #[arg(long = "param", global = true, value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Index window: positive:N, bilateral:N or <convention>:LO..HI.
    #[arg(long, global = true)]
    window: Option<String>,
    /// Window sizes of a certificate ladder, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    windows: Option<Vec<u32>>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Unit-circle tolerance of the classifier.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Search restarts.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Nelder-Mead iterations per restart.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Cell budget of the branch-and-bound certificate.
    #[arg(long, global = true)]
    max_cells: Option<usize>,
    /// supershadow: auto, super, weak-super, limit-super, structured, structured-limit.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Vector as JSON, e.g. [[1,0],[0,0.5]] or [1,0].
    #[arg(long, global = true, value_parser = parse_entries)]
    x: Option<Entries>,
    #[arg(long, global = true, value_parser = parse_entries)]
    y: Option<Entries>,
    #[arg(long, global = true, value_parser = parse_entries)]
    target: Option<Entries>,
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Last index N of hitting and density computations.
    #[arg(long, global = true)]
    horizon: Option<u64>,
    /// Index set: evens, squares, multiples:K or file:PATH.
    #[arg(long, global = true)]
    set: Option<String>,
    #[arg(long, global = true, value_enum)]
    density: Option<DensityKind>,
    #[arg(long, global = true)]
    n_min: Option<u64>,
    #[arg(long, global = true)]
    window_min: Option<u64>,
    #[arg(long, global = true)]
    window_max: Option<u64>,
    /// Density threshold t in (0, 1) of the corollary check.
    #[arg(long, global = true)]
    threshold: Option<f64>,
}

impl Flags {
    fn into_config(self) -> ExperimentConfig {
        ExperimentConfig {
            subcommand: None,
            demo: None,
            operator: self.operator,
            trajectory: self.trajectory,
            kind: self.kind,
            generator: None,
            window: self.window,
            windows: self.windows,
            eps: self.eps,
            delta: self.delta,
            tol: self.tol,
            seed: self.seed,
            out: self.out,
            format: self.format,
            budget: self.budget,
            iterations: self.iterations,
            max_cells: self.max_cells,
            mode: self.mode,
            x: self.x,
            y: self.y,
            target: self.target,
            radius: self.radius,
            targets: None,
            horizon: self.horizon,
            set: self.set,
            density: self.density,
            n_min: self.n_min,
            window_min: self.window_min,
            window_max: self.window_max,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Spectral verdict for --operator.
    #[command(after_help = "CSV columns: index, re, im, modulus (eigenvalues)")]
    Classify,
    /// Generate a pseudotrajectory (--kind random uses --operator, --delta, --x).
    #[command(after_help = "CSV columns: n, re_0, im_0, re_1, im_1, ...")]
    Pseudo,
    /// Shadow a pseudotrajectory of a hyperbolic operator.
    #[command(after_help = "CSV columns: n, lambda_re, lambda_im, residual")]
    Shadow,
    /// Super-shadowing witness: structured construction or search (--mode).
    #[command(after_help = "CSV columns: n, lambda_re, lambda_im, residual")]
    Supershadow,
    /// Certified lower bounds of the best super-shadowing residual over a window ladder.
    #[command(after_help = "CSV columns: window_lo, window_hi, status, lower_bound, upper_bound, cells")]
    Certify,
    /// Upper density and upper Banach density of an index set (--set).
    #[command(after_help = "CSV columns: n_prime, value, value_f64 (max window frequency per window length)")]
    Density,
    /// Hitting set of the projective orbit of --x in the ball (--target, --radius).
    #[command(after_help = "CSV columns: n, hit, dist")]
    Hitting,
    /// Density inequality of hitting sets for each target ball.
    #[command(after_help = "CSV columns: target, value, value_f64, n_prime, m, pass")]
    Corollary,
    /// delta-chain from --x to --y through 0 for a unitary operator.
    #[command(after_help = "CSV columns: i, re_0, im_0, ..., link_defect (defect of the link leaving point i)")]
    Chain,
    /// Run a named scenario and check it against its acceptance bound.
    #[command(after_help = "CSV columns: check, value, bound, pass")]
    Demo {
        #[arg(value_enum)]
        name: DemoName,
    },
    /// Run the subcommand named by `subcommand` (and `demo`) in the --config file.
    Run,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.flags.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let params = cli.flags.params.clone();
    let mut command = cli.command;
    if matches!(command, Command::Run) {
        command = match file.subcommand.as_deref() {
            Some("demo") => {
                let name = file.demo.as_deref().ok_or_else(|| CliError::Config("subcommand demo needs `demo`".into()))?;
                Command::Demo { name: clap::ValueEnum::from_str(name, false).map_err(|_| CliError::Config(format!("unknown demo `{name}`")))? }
            }
            Some(name) => Cli::try_parse_from(["supershadow", name]).map_err(|_| CliError::Config(format!("unknown subcommand `{name}`")))?.command,
            None => return Err(CliError::Config("run needs `subcommand` in the config file".into())),
        };
        if matches!(command, Command::Run) {
            return Err(CliError::Config("subcommand `run` cannot run itself".into()));
        }
    }
    let cfg = cli.flags.into_config().or(file);
    let ctx = commands::Context::new(cfg, params)?;
    match command {
        Command::Classify => commands::classify(&ctx),
        Command::Pseudo => commands::pseudo(&ctx),
        Command::Shadow => commands::shadow(&ctx),
        Command::Supershadow => commands::supershadow(&ctx),
        Command::Certify => commands::certify(&ctx),
        Command::Density => commands::density(&ctx),
        Command::Hitting => commands::hitting(&ctx),
        Command::Corollary => commands::corollary(&ctx),
        Command::Chain => commands::chain(&ctx),
        Command::Demo { name } => demos::run(name, &ctx),
        Command::Run => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
