//! Shift × lag benchmark: deterministic trial executor, parallel sweep
//! driver, and result summaries.
//!
//! A sweep enumerates (task, mode, shift radius, lag, seed index) cells,
//! derives one independent seed per trial from the master seed, and runs
//! every trial through [`trial::run_trial`]. Records come back in a fixed
//! order regardless of the worker count, so emitted artifacts are
//! byte-identical across parallelism settings.

pub mod emit;
pub mod trial;

pub use trial::{run_trial, AbortReason, TrialOptions, TrialRecord, TrialSpec};

use crate::config::Config;
use crate::retarget::RetargetMode;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

/// Benchmark task family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Drive a cube to a planar goal with the disc pusher.
    Push,
    /// Grasp a cube from above and lift it clear of the table.
    Pick,
    /// Pick one cube and place it on a fixed base cube.
    Stack,
    /// Lower a held peg into a clearance-fit socket.
    Peg,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Push, Task::Pick, Task::Stack, Task::Peg];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Push => "push",
            Task::Pick => "pick",
            Task::Stack => "stack",
            Task::Peg => "peg",
        }
    }

    pub fn index(&self) -> usize {
        Task::ALL.iter().position(|t| t == self).expect("listed")
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "push" => Ok(Task::Push),
            "pick" => Ok(Task::Pick),
            "stack" => Ok(Task::Stack),
            "peg" => Ok(Task::Peg),
            other => Err(format!(
                "unknown task '{other}' (expected push, pick, stack, or peg)"
            )),
        }
    }
}

pub fn mode_index(mode: RetargetMode) -> usize {
    RetargetMode::ALL
        .iter()
        .position(|m| *m == mode)
        .expect("listed")
}

/// SplitMix64 finalizer: a cheap, well-mixed u64 → u64 hash.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a sequence of terms into the master seed. Every distinct term
/// sequence yields an effectively independent output, so trial seeds do not
/// collide across cells and do not depend on how a sweep grid is chunked.
pub fn chain_seed(master: u64, terms: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &t in terms {
        h = splitmix64(h ^ t);
    }
    h
}

/// Seed for a trial, derived from cell coordinates rather than grid indices
/// so the same cell replays identically in any sweep that contains it.
pub fn trial_seed(master: u64, task: Task, mode: RetargetMode, shift_r: f64, lag_ms: u64, seed_index: u32) -> u64 {
    chain_seed(
        master,
        &[
            task.index() as u64 + 1,
            mode_index(mode) as u64 + 1,
            shift_mm(shift_r),
            lag_ms,
            seed_index as u64,
        ],
    )
}

/// Independent per-trial substream (world / protocol / filter RNGs).
pub fn substream(trial_seed: u64, stream: u64) -> u64 {
    splitmix64(trial_seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Shift radius in whole millimetres, used for seeding and grouping keys.
pub fn shift_mm(shift_r: f64) -> u64 {
    (shift_r * 1000.0).round() as u64
}

/// A full benchmark grid: the cross product of tasks, modes, shift radii,
/// lags, and per-cell seed indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPlan {
    pub tasks: Vec<Task>,
    pub modes: Vec<RetargetMode>,
    /// Teleport radii in metres.
    pub shifts: Vec<f64>,
    /// Perception lags in milliseconds.
    pub lags_ms: Vec<u64>,
    /// Trials per cell.
    pub seeds: u32,
    pub master_seed: u64,
}

impl SweepPlan {
    /// Enumerate all trials in canonical order: task, mode, shift, lag, seed.
    pub fn specs(&self) -> Vec<TrialSpec> {
        let mut out = Vec::with_capacity(
            self.tasks.len() * self.modes.len() * self.shifts.len() * self.lags_ms.len()
                * self.seeds as usize,
        );
        for &task in &self.tasks {
            for &mode in &self.modes {
                for &shift_r in &self.shifts {
                    for &lag_ms in &self.lags_ms {
                        for seed_index in 0..self.seeds {
                            out.push(TrialSpec {
                                task,
                                mode,
                                shift_r,
                                lag_ms,
                                seed_index,
                                trial_seed: trial_seed(
                                    self.master_seed,
                                    task,
                                    mode,
                                    shift_r,
                                    lag_ms,
                                    seed_index,
                                ),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tasks.len() * self.modes.len() * self.shifts.len() * self.lags_ms.len()
            * self.seeds as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Run one trial, converting a panic into an errored record instead of
/// tearing down the whole sweep.
pub fn run_trial_caught(spec: &TrialSpec, cfg: &Config, opts: &TrialOptions) -> TrialRecord {
    match catch_unwind(AssertUnwindSafe(|| run_trial(spec, cfg, opts))) {
        Ok(record) => record,
        Err(_) => TrialRecord::panicked(spec),
    }
}

/// Run every trial of `plan` on a dedicated worker pool.
///
/// Output order (and therefore every emitted artifact) is independent of
/// `parallelism`: records are produced positionally and then re-sorted by the
/// canonical cell order.
pub fn run_sweep(
    plan: &SweepPlan,
    cfg: &Config,
    opts: &TrialOptions,
    parallelism: usize,
) -> anyhow::Result<Vec<TrialRecord>> {
    let specs = plan.specs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()?;
    let mut records: Vec<TrialRecord> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| run_trial_caught(spec, cfg, opts))
            .collect()
    });
    sort_records(&mut records);
    Ok(records)
}

/// Canonical record order: task, mode, shift, lag, seed index.
pub fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by_key(|r| {
        (
            r.spec.task.index(),
            mode_index(r.spec.mode),
            shift_mm(r.spec.shift_r),
            r.spec.lag_ms,
            r.spec.seed_index,
        )
    });
}

/// Aggregate statistics for one (task, mode, shift, lag) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub task: Task,
    pub mode: RetargetMode,
    pub shift_r: f64,
    pub lag_ms: u64,
    pub trials: u32,
    pub success_rate: f64,
    pub abort_rate: f64,
    pub picked_rate: f64,
    pub mean_replans: f64,
    pub mean_guard_rejects: f64,
    /// Mean decision latency over trials that recorded one, seconds.
    pub mean_latency_s: f64,
    pub mean_travel_m: f64,
    pub mean_final_dist_m: f64,
    pub mean_min_dist_m: f64,
    pub mean_xy_err_m: f64,
    pub mean_ticks: f64,
}

/// Group records by cell and average. Input order does not matter; output is
/// in canonical cell order.
pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(usize, usize, u64, u64), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((
                r.spec.task.index(),
                mode_index(r.spec.mode),
                shift_mm(r.spec.shift_r),
                r.spec.lag_ms,
            ))
            .or_default()
            .push(r);
    }
    cells
        .into_values()
        .map(|rs| {
            let n = rs.len() as f64;
            let first = rs[0].spec;
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let latencies: Vec<f64> = rs.iter().filter_map(|r| r.retarget_latency_s).collect();
            let mean_latency_s = if latencies.is_empty() {
                f64::NAN
            } else {
                latencies.iter().sum::<f64>() / latencies.len() as f64
            };
            CellSummary {
                task: first.task,
                mode: first.mode,
                shift_r: first.shift_r,
                lag_ms: first.lag_ms,
                trials: rs.len() as u32,
                success_rate: mean(&|r| r.success as u8 as f64),
                abort_rate: mean(&|r| r.aborted.is_some() as u8 as f64),
                picked_rate: mean(&|r| r.picked as u8 as f64),
                mean_replans: mean(&|r| r.replans as f64),
                mean_guard_rejects: mean(&|r| r.guard_rejects as f64),
                mean_latency_s,
                mean_travel_m: mean(&|r| r.ee_travel_m),
                mean_final_dist_m: mean(&|r| r.final_goal_dist_m),
                mean_min_dist_m: mean(&|r| r.min_goal_dist_m),
                mean_xy_err_m: mean(&|r| r.final_xy_err_m),
                mean_ticks: mean(&|r| r.ticks as f64),
            }
        })
        .collect()
}
