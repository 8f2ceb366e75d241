//! `demoselect`: generate landscapes, run selections, and drive experiments.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data or parse error,
//! 3 evaluator failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use demoselect_core::harness::{ErrorClass, HarnessError};
use demoselect_core::oracle::OracleError;
use demoselect_core::select::SelectError;

mod experiment;
mod gen;
mod ids;
mod select;
mod serve;

#[derive(Parser, Debug)]
#[command(name = "demoselect", version, about = "Task-level demonstration set selection")]
struct Cli {
    /// Cap on worker threads (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Materialize a synthetic landscape as matrix, table, features and manifest files.
    Gen(gen::GenArgs),
    /// Run one selection strategy and write its trace.
    Select(select::SelectArgs),
    /// Run every configured (seed, strategy) cell and report mean ± std.
    Compare(ConfigArgs),
    /// Coincidence and rank-frequency analyses over the configured seeds.
    Analyze(ConfigArgs),
    /// Compare measured set evaluations with each strategy's worst-case bound.
    Audit(ConfigArgs),
    /// Answer evaluator protocol requests from a one-shot matrix.
    #[command(hide = true)]
    ServeMock(serve::ServeArgs),
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory (default: the config's output_dir, else the current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HoldoutArg {
    Fixed,
    Loocv,
}

/// A failure with its exit code already decided.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

fn code_of(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Oracle => 3,
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure {
            code: code_of(e.class()),
            message: e.to_string(),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        HarnessError::from(e).into()
    }
}

impl From<SelectError> for Failure {
    fn from(e: SelectError) -> Self {
        HarnessError::from(e).into()
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_output(path: &std::path::Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot size thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => gen::run(a),
        Command::Select(a) => select::run(a),
        Command::Compare(a) => experiment::compare(a),
        Command::Analyze(a) => experiment::analyze(a),
        Command::Audit(a) => experiment::audit(a),
        Command::ServeMock(a) => serve::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DEMOSELECT_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
