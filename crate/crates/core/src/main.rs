//! Command-line front end for the shift × lag benchmark.
//!
//! Three subcommands: `trial` runs one seeded trial and prints its record,
//! `sweep` runs a full grid and writes the CSV/SVG/report artifacts, and
//! `report` regenerates summaries from an existing records file. `config`
//! prints the effective parameter set as TOML, which can be edited and fed
//! back via `--config`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use lagbench::bench::{
    emit, run_sweep, run_trial, trial_seed, SweepPlan, Task, TrialOptions, TrialSpec,
};
use lagbench::{Config, RetargetMode};

#[derive(Parser, Debug)]
#[command(
    name = "lagbench",
    version,
    about = "Deterministic tabletop stress bench for goal retargeting under perception lag"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a single trial and print its record.
    Trial(TrialCmd),
    /// Run a benchmark grid and write records, summaries, and heatmaps.
    Sweep(SweepCmd),
    /// Rebuild summary artifacts from an existing records.csv.
    Report(ReportCmd),
    /// Print the effective configuration as TOML.
    Config(ConfigCmd),
}

/// Parameter sources shared by every subcommand.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML file with simulator/controller parameters (defaults otherwise).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a single parameter, e.g. `--set delta_max=0.004` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> anyhow::Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => {
                let path = path.to_str().context("config path is not valid UTF-8")?;
                Config::from_path(path).with_context(|| format!("loading {path}"))?
            }
            None => Config::default(),
        };
        for spec in &self.set {
            cfg.apply_override(spec)
                .with_context(|| format!("applying --set {spec}"))?;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TrialCmd {
    #[command(flatten)]
    config: ConfigArgs,
    /// Task family: push, pick, stack, or peg.
    #[arg(long, default_value = "push")]
    task: Task,
    /// Retargeting mode: none, nearest, icp, uar, or uar_pf.
    #[arg(long, default_value = "uar_pf")]
    mode: RetargetMode,
    /// Mid-execution teleport radius, metres.
    #[arg(long, default_value_t = 0.10)]
    shift: f64,
    /// Perception outage after the teleport, milliseconds.
    #[arg(long, default_value_t = 200)]
    lag_ms: u64,
    /// Trial index within the cell (selects the RNG stream).
    #[arg(long, default_value_t = 0)]
    seed_index: u32,
    /// Master seed the per-trial seed is derived from.
    #[arg(long, default_value_t = 7)]
    master_seed: u64,
    /// Displace every post-outage scan 20 cm from the trusted estimate.
    #[arg(long)]
    corrupt_fresh: bool,
    /// Print the per-tick execution trace to stderr.
    #[arg(long)]
    trace: bool,
}

#[derive(Args, Debug)]
struct SweepCmd {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated task list.
    #[arg(long, value_delimiter = ',', default_value = "push,pick")]
    tasks: Vec<Task>,
    /// Comma-separated mode list.
    #[arg(long, value_delimiter = ',', default_value = "none,nearest,icp,uar,uar_pf")]
    modes: Vec<RetargetMode>,
    /// Comma-separated teleport radii, metres.
    #[arg(long, value_delimiter = ',', default_value = "0.0,0.06,0.10")]
    shifts: Vec<f64>,
    /// Comma-separated perception lags, milliseconds.
    #[arg(long, value_delimiter = ',', default_value = "0,200,400")]
    lags_ms: Vec<u64>,
    /// Trials per cell.
    #[arg(long, default_value_t = 20)]
    seeds: u32,
    /// Master seed for the whole grid.
    #[arg(long, default_value_t = 7)]
    master_seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
    /// Displace every post-outage scan 20 cm from the trusted estimate.
    #[arg(long)]
    corrupt_fresh: bool,
    /// Output directory for records.csv, summary.csv, report.txt, heatmaps.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportCmd {
    /// records.csv produced by a previous sweep.
    #[arg(long, value_name = "PATH")]
    records: PathBuf,
    /// Output directory for the regenerated artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConfigCmd {
    #[command(flatten)]
    config: ConfigArgs,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Trial(cmd) => trial(cmd),
        Command::Sweep(cmd) => sweep(cmd),
        Command::Report(cmd) => report(cmd),
        Command::Config(cmd) => {
            print!("{}", cmd.config.build()?.to_toml_string());
            Ok(())
        }
    }
}

fn trial(cmd: TrialCmd) -> anyhow::Result<()> {
    let cfg = cmd.config.build()?;
    let spec = TrialSpec {
        task: cmd.task,
        mode: cmd.mode,
        shift_r: cmd.shift,
        lag_ms: cmd.lag_ms,
        seed_index: cmd.seed_index,
        trial_seed: trial_seed(
            cmd.master_seed,
            cmd.task,
            cmd.mode,
            cmd.shift,
            cmd.lag_ms,
            cmd.seed_index,
        ),
    };
    let opts = TrialOptions {
        corrupt_fresh: cmd.corrupt_fresh,
        trace: cmd.trace,
        ..TrialOptions::default()
    };
    let record = run_trial(&spec, &cfg, &opts);
    if cmd.trace {
        for line in &record.trace {
            eprintln!("{line}");
        }
    }
    print!("{}", emit::records_csv(std::slice::from_ref(&record)));
    Ok(())
}

fn sweep(cmd: SweepCmd) -> anyhow::Result<()> {
    let cfg = cmd.config.build()?;
    let plan = SweepPlan {
        tasks: cmd.tasks,
        modes: cmd.modes,
        shifts: cmd.shifts,
        lags_ms: cmd.lags_ms,
        seeds: cmd.seeds,
        master_seed: cmd.master_seed,
    };
    anyhow::ensure!(!plan.is_empty(), "the sweep grid is empty");
    let opts = TrialOptions {
        corrupt_fresh: cmd.corrupt_fresh,
        ..TrialOptions::default()
    };
    eprintln!("running {} trials...", plan.len());
    let records = run_sweep(&plan, &cfg, &opts, cmd.parallelism)?;
    emit_all(&cmd.out, &records)
}

fn report(cmd: ReportCmd) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&cmd.records)
        .with_context(|| format!("reading {}", cmd.records.display()))?;
    let records = emit::parse_records_csv(&text)?;
    emit_all(&cmd.out, &records)
}

fn emit_all(dir: &Path, records: &[lagbench::bench::TrialRecord]) -> anyhow::Result<()> {
    let written = emit::write_outputs(dir, records)
        .with_context(|| format!("writing artifacts under {}", dir.display()))?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
