//! Sweep cells (axis value × seed × policy), run concurrently, each owning
//! its random streams; results are assembled in cell order.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ResolvedConfig, SweepAxis};
use super::io::{self, EpisodeRow, SummaryRow};
use crate::agents::train::{evaluate, train, AgentBundle, EpisodeMetrics};
use crate::baselines::PolicyKind;
use crate::env::StepRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub policy: PolicyKind,
    pub axis_value: Option<f64>,
    pub seed: u64,
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let values: Vec<Option<f64>> = match cfg.sweep.axis {
        SweepAxis::None => vec![None],
        _ => cfg.sweep.values.iter().copied().map(Some).collect(),
    };
    let mut out = Vec::new();
    for &axis_value in &values {
        for &seed in &cfg.seeds {
            for &policy in &cfg.policies {
                out.push(Cell { policy, axis_value, seed });
            }
        }
    }
    out
}

/// Everything one training run produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: Cell,
    pub config_hash: String,
    pub episodes: Vec<EpisodeMetrics>,
    pub eval_aaoi: f64,
    pub eval_return: f64,
    /// Constraint violations over training and evaluation.
    pub violations: usize,
    /// Episode at which a loss went non-finite, if any.
    pub diverged_at: Option<usize>,
    pub wall_clock_s: f64,
    #[serde(skip)]
    pub trace: Vec<StepRecord>,
    #[serde(skip)]
    pub bundle: Option<AgentBundle>,
}

/// Trains and evaluates one cell.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> Result<RunRecord> {
    let start = Instant::now();
    let scn = cfg.scenario_at(cell.axis_value);
    scn.validate()?;
    let out = train(&scn, &cfg.agent, cell.policy, cell.seed, |_| {})?;
    let eval = evaluate(&out.bundle, &scn, cell.seed, cfg.agent.eval_episodes)?;
    let train_violations: usize = out.episodes.iter().map(|m| m.violations).sum();
    Ok(RunRecord {
        cell,
        config_hash: cfg.hash(),
        eval_aaoi: eval.mean_aaoi(),
        eval_return: eval.mean_return(),
        violations: train_violations + eval.violations(),
        diverged_at: out.diverged.map(|d| d.0),
        episodes: out.episodes,
        wall_clock_s: start.elapsed().as_secs_f64(),
        trace: eval.trace,
        bundle: Some(out.bundle),
    })
}

pub struct SweepOutcome {
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<Result<RunRecord>>,
}

fn summary_row(cfg: &ExperimentConfig, cell: Cell, run: &Result<RunRecord>) -> SummaryRow {
    let (aaoi, mean_return, violations, status) = match run {
        Ok(r) if r.diverged_at.is_some() => (None, None, r.violations, "diverged".to_string()),
        Ok(r) => (Some(r.eval_aaoi), Some(r.eval_return), r.violations, "ok".to_string()),
        Err(e) => (None, None, 0, e.kind().to_string()),
    };
    SummaryRow {
        policy: cell.policy.to_string(),
        axis: cfg.sweep.axis.name().to_string(),
        axis_value: cell.axis_value,
        seed: cell.seed,
        aaoi,
        mean_return,
        violations,
        status,
    }
}

/// Runs every cell on `cfg.workers` threads. A failing cell is recorded with
/// its error kind and the others continue.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let cells = cells(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let runs: Vec<Result<RunRecord>> = pool.install(|| cells.par_iter().map(|&c| run_cell(cfg, c)).collect());
    let summary = cells.iter().zip(&runs).map(|(&c, r)| summary_row(cfg, c, r)).collect();
    Ok(SweepOutcome { summary, runs })
}

fn cell_dir(cell: &Cell) -> String {
    match cell.axis_value {
        Some(v) => format!("cells/{}/{v}", cell.policy),
        None => format!("cells/{}", cell.policy),
    }
}

/// Writes `summary.csv`, `episodes.csv`, the resolved configuration and
/// per-cell traces under `dir`.
pub fn write_sweep(dir: &Path, resolved: &ResolvedConfig, outcome: &SweepOutcome) -> Result<()> {
    io::write_json(&dir.join(io::RESOLVED_FILE), resolved)?;
    io::write_rows(&dir.join(io::SUMMARY_FILE), io::SUMMARY_HEADER, &outcome.summary)?;
    let mut episodes = Vec::new();
    for run in outcome.runs.iter().flatten() {
        let c = run.cell;
        episodes.extend(run.episodes.iter().map(|m| EpisodeRow::new(c.policy.name(), c.axis_value, c.seed, m)));
        let sub = dir.join(cell_dir(&c));
        io::write_trace(&sub.join(io::trace_file(c.seed)), &run.trace)?;
        io::write_rows(&sub.join(io::trajectory_file(c.seed)), io::TRAJECTORY_HEADER, &io::trajectory_rows(&run.trace))?;
    }
    io::write_rows(&dir.join(io::EPISODES_FILE), io::EPISODES_HEADER, &episodes)
}
