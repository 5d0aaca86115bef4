//! `rca` command line: diagnose one job, run a batch with evaluation,
//! replay a persisted trajectory, or generate a scenario bundle.
//!
//! Exit codes: 0 success, 1 a run completed but failed its contract
//! (trajectory did not pass, pass rate below the floor, replay diverged),
//! 2 usage, configuration or I/O errors.

pub mod config;
mod run;

pub use config::{AggregateArg, BackendKind, ModeArg, RunConfig};
pub use run::{JobSummary, Runner};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rca_core::agent::{read_trajectory, replay};
use rca_core::llm::API_KEY_ENV;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rca",
    version,
    about = "Root cause analysis agent for streaming-job anomalies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Diagnose one job of a scenario bundle.
    Diagnose {
        #[arg(long)]
        job: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Diagnose every job of a bundle and write an evaluation report.
    Batch {
        #[command(flatten)]
        run: RunArgs,
        /// Minimum pass rate in percent for a zero exit code.
        #[arg(long)]
        pass_rate_floor: Option<f64>,
    },
    /// Re-render prompts of a persisted trajectory and check its digests.
    Replay { file: PathBuf },
    /// Write a synthetic scenario bundle.
    GenScenarios {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario bundle directory.
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Output directory for trajectories, results and reports.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with run settings; flags given here take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub embedding_model: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregate: Option<AggregateArg>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub global_step_bound: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub malformed_rate: Option<f64>,
    /// Parse actions strictly, without repair or regeneration.
    #[arg(long)]
    pub no_json_regen: bool,
    #[arg(long)]
    pub no_error_handling: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$( if let Some(v) = self.$field.clone() { c.$field = v; } )*};
        }
        set!(
            backend,
            mode,
            k,
            aggregate,
            max_steps,
            global_step_bound,
            seed,
            jobs,
            malformed_rate
        );
        if let Some(e) = &self.endpoint {
            c.http.endpoint = e.clone();
        }
        if let Some(m) = &self.model {
            c.http.model = m.clone();
        }
        if let Some(m) = &self.embedding_model {
            c.http.embedding_model = m.clone();
        }
        if self.no_json_regen {
            c.json_regen = false;
        }
        if self.no_error_handling {
            c.error_handling = false;
        }
        if c.http.api_key.is_none() {
            c.http.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        c.validate()
            .map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
        Ok(c)
    }
}

pub fn cmd_diagnose(
    job_id: &str,
    scenarios: &Path,
    out: &Path,
    config: RunConfig,
) -> anyhow::Result<i32> {
    let runner = Runner::new(config, scenarios)?;
    let summary = runner.run_job(job_id, &out.join(job_id))?;
    println!("{}", summary.line());
    Ok(if summary.outcome.trajectory.passed {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

pub fn cmd_batch(scenarios: &Path, out: &Path, config: RunConfig) -> anyhow::Result<i32> {
    let floor = config.pass_rate_floor;
    let runner = Runner::new(config, scenarios)?;
    let report = runner.run_batch(out)?;
    let s = &report.summary;
    println!(
        "jobs {} | pass rate {:.2}% | invalid rate {:.2}% | errored rate {:.2}% | mean steps {:.2} | responsibility accuracy {:.2}%",
        s.jobs, s.pass_rate, s.invalid_rate, s.errored_rate, s.mean_trajectory_length, s.responsibility_accuracy
    );
    Ok(if s.pass_rate >= floor {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

pub fn cmd_replay(file: &Path) -> anyhow::Result<i32> {
    let parsed = read_trajectory(file).with_context(|| format!("reading {}", file.display()))?;
    let report = replay(&parsed);
    match report.diverged_at {
        None => {
            println!("replay consistent: {} steps", report.steps_checked);
            Ok(EXIT_OK)
        }
        Some(i) => {
            println!(
                "replay diverged at step {i}: {}",
                report.detail.unwrap_or_default()
            );
            Ok(EXIT_FAILED)
        }
    }
}

pub fn cmd_gen_scenarios(seed: u64, count: usize, out: &Path) -> anyhow::Result<i32> {
    let bundle = rca_sandbox::generate_scenarios(seed, count);
    rca_sandbox::write_bundle(&bundle, out)?;
    println!("wrote {count} scenarios to {}", out.display());
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Diagnose { job, run } => {
            cmd_diagnose(&job, &run.scenarios, &run.out, run.resolve()?)
        }
        Command::Batch {
            run,
            pass_rate_floor,
        } => {
            let mut config = run.resolve()?;
            if let Some(f) = pass_rate_floor {
                config.pass_rate_floor = f;
                config
                    .validate()
                    .map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
            }
            cmd_batch(&run.scenarios, &run.out, config)
        }
        Command::Replay { file } => cmd_replay(&file),
        Command::GenScenarios { seed, count, out } => cmd_gen_scenarios(seed, count, &out),
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
