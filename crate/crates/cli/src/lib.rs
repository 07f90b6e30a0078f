//! `fdxsim` command-line front end.
//!
//! ```text
//! fdxsim run <config.toml | manifest.json> [--set PATH=VALUE]... [--seed N] [--threads N] [--out DIR]
//! fdxsim figures <fig2..fig7 | all> [--trials N] [--seed N] [--threads N] [--out DIR]
//! fdxsim selftest
//! ```
//!
//! Exit codes: 0 success, 1 self-test failure, 2 usage or configuration
//! error, 3 infeasible scenario.

pub mod config;
pub mod output;
pub mod presets;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use fdxsim_core::selftest::{self, GradientFn};
use fdxsim_core::simulation::{run_sweep, SweepResult};
use fdxsim_core::Error as CoreError;

use crate::config::RunFile;
use crate::output::{Outputs, RunManifest};
use crate::presets::Figure;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

pub const SEED_ENV: &str = "FDXSIM_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            _ => EXIT_USAGE,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Infeasible(_) | CoreError::Selection(_) => CliError::Infeasible(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fdxsim", version, about = "Full-duplex cooperative OFDMA uplink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Overrides the run file and FDXSIM_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sweep described by a TOML run file or a previous manifest.
    Run {
        config: PathBuf,
        /// Dotted-path override such as `pmax_user_dbm=10` or `si.enabled=false`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a built-in figure sweep and write `<figure>.csv`.
    Figures {
        #[arg(value_enum)]
        which: Figure,
        /// Trials per point (default 500).
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the oracle suites.
    Selftest,
    /// Print the default run file.
    DefaultConfig,
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let result = match cli.command {
        Command::Run { config, set, common } => cmd_run(&config, &set, &common, env_seed.as_deref()).map(|_| EXIT_OK),
        Command::Figures { which, trials, common } => {
            cmd_figures(which, trials, &common, env_seed.as_deref()).map(|_| EXIT_OK)
        }
        Command::Selftest => Ok(cmd_selftest()),
        Command::DefaultConfig => {
            print!("{}", config::default_run_file().to_toml());
            Ok(EXIT_OK)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("fdxsim: {e}");
        e.exit_code()
    })
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("--threads {n}: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Resolves the seed, runs the sweep and writes the CSV and manifest named
/// by `csv` and `manifest` into `out`.
pub fn execute(
    mut run: RunFile,
    source: String,
    (csv, manifest): (&str, &str),
    common: &CommonArgs,
    env_seed: Option<&str>,
) -> Result<(SweepResult, Outputs), CliError> {
    run.scenario.seed = config::resolve_seed(run.scenario.seed, env_seed, common.seed)?;
    run.scenario.validate()?;
    let sweep = run.sweep_or_default();
    run.sweep = Some(sweep.clone());
    let result = with_threads(common.threads, || run_sweep(&run.scenario, &sweep.axis, &sweep.series))??;

    std::fs::create_dir_all(&common.out).map_err(|e| CliError::Io(format!("{}: {e}", common.out.display())))?;
    let outputs = Outputs {
        csv: common.out.join(csv),
        manifest: common.out.join(manifest),
    };
    output::write_csv(&outputs.csv, &result)?;
    RunManifest::new(source, outputs.clone(), run, &result).write(&outputs.manifest)?;
    for p in &result.points {
        println!(
            "{}={} {}: {:.6} +- {:.6} bit/s/Hz ({} trials, {} failed, {} QoS-relaxed)",
            result.axis_name, p.axis, p.series, p.mean, p.stderr, p.trials, p.failed_trials, p.qos_relaxed_trials
        );
    }
    println!("wrote {} and {}", outputs.csv.display(), outputs.manifest.display());
    Ok((result, outputs))
}

/// `fdxsim run`: writes `sweep.csv` and `manifest.json`.
pub fn cmd_run(
    config_path: &Path,
    overrides: &[String],
    common: &CommonArgs,
    env_seed: Option<&str>,
) -> Result<(SweepResult, Outputs), CliError> {
    let run = config::load(config_path, overrides)?;
    execute(run, config_path.display().to_string(), ("sweep.csv", "manifest.json"), common, env_seed)
}

/// `fdxsim figures`: one CSV and manifest per figure.
pub fn cmd_figures(
    which: Figure,
    trials: Option<usize>,
    common: &CommonArgs,
    env_seed: Option<&str>,
) -> Result<Vec<(SweepResult, Outputs)>, CliError> {
    which
        .expand()
        .into_iter()
        .map(|fig| {
            let mut run = presets::preset(fig);
            if let Some(t) = trials {
                run.scenario.trials = t;
            }
            let name = fig.name();
            let files = (format!("{name}.csv"), format!("{name}.manifest.json"));
            execute(run, format!("preset {name}"), (&files.0, &files.1), common, env_seed)
        })
        .collect()
}

pub fn cmd_selftest() -> i32 {
    cmd_selftest_with(fdxsim_core::power_allocation::objective_and_gradient)
}

/// Runs every suite against `gradient`; exit 0 iff all pass.
pub fn cmd_selftest_with(gradient: GradientFn) -> i32 {
    let results = selftest::run_all_with(gradient);
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_SELFTEST_FAILED
    }
}
