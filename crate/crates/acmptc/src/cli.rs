//! Command-line surface.
//!
//! Subcommands: `simulate`, `train`, `compare`, `gradcheck`,
//! `export-plots`. Exit codes: 0 success, 1 validation error (bad flags,
//! malformed config or input files), 2 runtime failure.
//!
//! Seed precedence for `simulate`: `--seed`, then the `ACMPTC_SEED`
//! environment variable, then `dynamics.seed` from the config.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::{parse_config, ParsedConfig};
use crate::drl::{gradcheck, ActionSpec};
use crate::export;
use crate::sim::{
    run_comparison, run_episode_with_agents, train_agents, ScenarioConfig, SchedulerKind, SimError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "acmptc", version, about = "Deterministic multi-path transport simulator and trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode and export metrics and a summary.
    Simulate {
        /// Scenario config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Run seed; falls back to $ACMPTC_SEED, then dynamics.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Print the resolved config with per-field provenance and exit.
        #[arg(long)]
        explain_config: bool,
    },
    /// Train agents on one or more seeds; writes checkpoints and reward series.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Seed range `A..B` (end exclusive) or a single seed `N`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several schedulers over paired seeds and export the comparison.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated scheduler list.
        #[arg(long, default_value = "tcp,mptcp,acmptc,acmptc_drl")]
        schedulers: String,
        /// Seed range `A..B` (end exclusive) or a single seed `N`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify backprop gradients against central finite differences.
    Gradcheck {
        /// Maximum parameter count of the random test networks.
        #[arg(long, default_value_t = 1000)]
        params: usize,
    },
    /// Convert exported metrics into plot-ready long-format CSV series.
    ExportPlots {
        /// Directory holding metrics*.csv files.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<export::ExportError> for CliError {
    fn from(e: export::ExportError) -> Self {
        match e {
            export::ExportError::Io(_) => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<crate::checkpoint::CheckpointError> for CliError {
    fn from(e: crate::checkpoint::CheckpointError) -> Self {
        match e {
            crate::checkpoint::CheckpointError::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn load_config(path: &Path) -> Result<ParsedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

/// Parse `A..B` (end exclusive) or a single `N` into a seed list.
fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    let invalid = || CliError::Validation(format!("invalid seed range `{spec}`: expected `A..B` or `N`"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| invalid())?;
        let b: u64 = b.trim().parse().map_err(|_| invalid())?;
        if a >= b {
            return Err(CliError::Validation(format!("empty seed range `{spec}`: start must be below end")));
        }
        Ok((a..b).collect())
    } else {
        let n: u64 = spec.trim().parse().map_err(|_| invalid())?;
        Ok(vec![n])
    }
}

fn parse_schedulers(spec: &str) -> Result<Vec<SchedulerKind>, CliError> {
    spec.split(',')
        .map(|s| s.trim().parse::<SchedulerKind>().map_err(CliError::Validation))
        .collect()
}

fn resolve_seed(cli_seed: Option<u64>, cfg: &ScenarioConfig) -> Result<u64, CliError> {
    if let Some(seed) = cli_seed {
        return Ok(seed);
    }
    if let Ok(env_seed) = std::env::var("ACMPTC_SEED") {
        return env_seed
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("ACMPTC_SEED must be an unsigned integer, got `{env_seed}`")));
    }
    Ok(cfg.dynamics.seed)
}

fn cmd_simulate(config: &Path, seed: Option<u64>, out: &Path, explain: bool) -> Result<(), CliError> {
    let parsed = load_config(config)?;
    if explain {
        print!("{}", parsed.explain());
        return Ok(());
    }
    let cfg = parsed.config;
    let seed = resolve_seed(seed, &cfg)?;
    let agents = match (&cfg.scheduler, &cfg.checkpoint_path) {
        (SchedulerKind::AcmptcDrl, Some(path)) => {
            let checkpoint = Checkpoint::load(path)?;
            if checkpoint.agents.len() != cfg.streams.len() {
                return Err(CliError::Validation(format!(
                    "checkpoint holds {} agents but the scenario has {} streams",
                    checkpoint.agents.len(),
                    cfg.streams.len()
                )));
            }
            Some(checkpoint.agents)
        }
        _ => None,
    };
    let result = run_episode_with_agents(&cfg, seed, agents.as_deref())?;
    export::export_episode(&result, out)?;
    println!(
        "simulate: scheduler={} seed={seed} steps={} mean_throughput={} mean_utility={}",
        cfg.scheduler.name(),
        cfg.horizon,
        export::format_real(result.summary.aggregate.mean_delivered_mbps),
        export::format_real(result.summary.aggregate.mean_utility),
    );
    Ok(())
}

fn cmd_train(config: &Path, seeds: &str, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?.config;
    let seeds = parse_seeds(seeds)?;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    for seed in seeds {
        let (agents, report) = train_agents(&cfg, seed)?;
        let checkpoint = Checkpoint::new(
            cfg.agent.clone(),
            crate::drl::observation_dim(cfg.dynamics.n_paths),
            ActionSpec::action_count(cfg.dynamics.n_paths),
            agents,
        );
        checkpoint.save(&out.join(format!("checkpoint_seed{seed}.json")))?;
        let rewards = fs::File::create(out.join(format!("rewards_seed{seed}.csv")))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        export::write_reward_series(&report, std::io::BufWriter::new(rewards))?;
        let last = report.episode_rewards.last().copied().unwrap_or(0.0);
        println!(
            "train: seed={seed} episodes={} final_episode_reward={}",
            report.episode_rewards.len(),
            export::format_real(last)
        );
    }
    Ok(())
}

fn cmd_compare(config: &Path, schedulers: &str, seeds: &str, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?.config;
    let schedulers = parse_schedulers(schedulers)?;
    let seeds = parse_seeds(seeds)?;
    let report = run_comparison(&cfg, &schedulers, &seeds)?;
    export::export_comparison(&report, out)?;
    for column in &report.columns {
        println!(
            "compare: scheduler={} mean_throughput={} mean_utility={}",
            column.scheduler.name(),
            export::format_real(column.mean_delivered_mbps()),
            export::format_real(column.mean_utility()),
        );
    }
    Ok(())
}

fn cmd_gradcheck(params: usize) -> Result<(), CliError> {
    let report = gradcheck::run_suite(params, 50, 0);
    println!(
        "gradcheck: nets={} max_params={params} max_rel_error={:e} threshold={:e} -> {}",
        report.cases,
        report.max_rel_error,
        report.threshold,
        if report.passed() { "PASS" } else { "FAIL" }
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Runtime("gradient check failed".into()))
    }
}

/// Run the CLI on explicit arguments; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, seed, out, explain_config } => {
            cmd_simulate(config, *seed, out, *explain_config)
        }
        Command::Train { config, seeds, out } => cmd_train(config, seeds, out),
        Command::Compare { config, schedulers, seeds, out } => cmd_compare(config, schedulers, seeds, out),
        Command::Gradcheck { params } => cmd_gradcheck(*params),
        Command::ExportPlots { input, out } => export::export_plots(input, out).map_err(CliError::from),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges_parse() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("a..b").is_err());
    }

    #[test]
    fn scheduler_lists_parse() {
        let kinds = parse_schedulers("tcp, mptcp,acmptc").unwrap();
        assert_eq!(kinds, vec![SchedulerKind::Tcp, SchedulerKind::Mptcp, SchedulerKind::Acmptc]);
        assert!(parse_schedulers("tcp,warp").is_err());
    }

    #[test]
    fn unknown_subcommand_is_a_validation_error() {
        assert_eq!(cli_main(["acmptc", "frobnicate"]), EXIT_VALIDATION);
        assert_eq!(cli_main(["acmptc", "--help"]), EXIT_OK);
    }
}
