//! `hhlink`: simulate survey waves, fit and apply the household-aware linkage
//! models, evaluate them and compare against the Fellegi-Sunter baseline.
//!
//! The binary is a thin wrapper around [`run`]; the library form lets the
//! whole command line be driven in-process.

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand, ValueEnum};

static QUIET: AtomicBool = AtomicBool::new(false);

/// Prints a one-line command summary unless `--quiet` was given.
macro_rules! say {
    ($($arg:tt)*) => {
        if !$crate::QUIET.load(::std::sync::atomic::Ordering::Relaxed) {
            println!($($arg)*);
        }
    };
}

mod commands;
mod config;

use crate::config::{Method, RunConfig};

/// Error carrying a stable code for the single-line report on stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new("E_CONFIG", message)
    }

    /// Argument errors keep only clap's first line.
    pub fn usage(e: &clap::Error) -> Self {
        let rendered = e.to_string();
        let first = rendered.lines().next().unwrap_or("invalid arguments");
        CliError::new("E_USAGE", first.trim_start_matches("error: "))
    }
}

impl From<hhlink::Error> for CliError {
    fn from(e: hhlink::Error) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep the report on one line whatever the underlying message holds
        write!(
            f,
            "error[{}]: {}",
            self.code,
            self.message.replace('\n', " ")
        )
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "hhlink",
    version,
    about = "Household-aware record linkage across survey waves"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration and every nested seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short = 'o', global = true)]
    output_dir: Option<PathBuf>,
    /// Directory with the input files under their standard names
    /// (default: the output directory).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    method: Option<Method>,
    /// Override a configuration entry, e.g. `--set hhlink.individual.cv_folds=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Suppress the summary lines on stdout.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic waves with ground truth.
    Simulate {
        #[arg(long, default_value_t = 2)]
        waves: usize,
    },
    /// Fit models on the first two waves.
    Train,
    /// Apply fitted models to the first two waves.
    Predict,
    /// Score match files against the ground truth.
    Evaluate,
    /// Run both methods on the same test data.
    Compare,
    /// Internal (repeated splits) or external (next wave pair) validation.
    Validate {
        #[arg(long, value_enum, default_value_t = ValidationMode::Internal)]
        mode: ValidationMode,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ValidationMode {
    Internal,
    External,
}

impl ValueEnum for Method {
    fn value_variants<'a>() -> &'a [Self] {
        &[Method::Hhlink, Method::FsBaseline]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Method::Hhlink => "hhlink",
            Method::FsBaseline => "fs-baseline",
        }))
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(dir) = &cli.data_dir {
        cfg.data.dir = Some(dir.clone());
    }
    if let Some(method) = cli.method {
        cfg.method = method;
    }
    cfg.propagate_seed();
    Ok(cfg)
}

/// Executes a parsed command line. `--threads` runs the command inside a
/// dedicated pool, so repeated calls in one process may use different counts.
pub fn run(cli: Cli) -> Result<(), CliError> {
    QUIET.store(cli.quiet, Ordering::Relaxed);
    match cli.threads {
        Some(0) => Err(CliError::config("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::new("E_THREADS", e.to_string()))?
            .install(|| execute(cli)),
        None => execute(cli),
    }
}

/// Parses `args` (without the program name) and runs them.
pub fn run_args<I, S>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv =
        std::iter::once(std::ffi::OsString::from("hhlink")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::usage(&e))?;
    run(cli)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    let schema = cfg.load_schema()?;
    cfg.validate(&schema)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| {
        CliError::new(
            "E_OUTPUT",
            format!("cannot create {}: {e}", cfg.output_dir.display()),
        )
    })?;
    commands::write_text(&cfg.output_path("effective_config.toml"), &cfg.to_toml()?)?;
    match cli.command {
        Command::Simulate { waves } => commands::simulate(&cfg, waves),
        Command::Train => commands::train(&cfg, &schema),
        Command::Predict => commands::predict(&cfg, &schema),
        Command::Evaluate => commands::evaluate(&cfg, &schema),
        Command::Compare => commands::compare(&cfg, &schema),
        Command::Validate { mode } => commands::validate(&cfg, &schema, mode),
    }
}
