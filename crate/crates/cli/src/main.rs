//! `uavris`: train, evaluate, sweep, run the oracles, or print the resolved
//! configuration. Failures print one JSON object on stderr and exit nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use uavris_core::agents::train::{evaluate, train};
use uavris_core::experiment::io::{self, EpisodeRow, SummaryRow, UserRow};
use uavris_core::experiment::sweep::{run_sweep, write_sweep, Cell, RunRecord};
use uavris_core::experiment::{Checkpoint, ExperimentConfig, Profile};
use uavris_core::{oracle, Env, Error, PolicyKind, Result, StepRecord};

#[derive(Parser)]
#[command(name = "uavris", version, about = "AoI-driven UAV relay simulator and learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy on one seed and write metrics, traces and a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Where to write the trained agent (default: <out>/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint greedily on held-out episodes.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run every (axis value, seed, policy) cell of the configured sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Run the brute-force reference checks.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the fully resolved configuration with value origins.
    ResolveConfig {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON or TOML file with overrides on top of the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// Replaces the seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the policy list with this single policy.
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    /// Overrides from the file with command-line flags layered on top.
    fn overrides(&self) -> Result<Value> {
        let mut v = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                match path.extension().and_then(|e| e.to_str()) {
                    Some("toml") => uavris_core::experiment::config::toml_value(&text)?,
                    _ => serde_json::from_str(&text)?,
                }
            }
            None => json!({}),
        };
        if !v.is_object() {
            return Err(Error::Config("configuration file must hold a table".into()));
        }
        if let Some(seed) = self.seed {
            v["seeds"] = json!([seed]);
        }
        if let Some(policy) = self.policy {
            v["policies"] = json!([policy]);
        }
        if let Some(out) = &self.out {
            v["output_dir"] = json!(out);
        }
        Ok(v)
    }

    fn resolve(&self) -> Result<(ExperimentConfig, Value)> {
        let over = self.overrides()?;
        Ok((ExperimentConfig::from_overrides(self.profile, over.clone())?, over))
    }
}

fn write_traces(dir: &Path, seed: u64, trace: &[StepRecord], env: &Env) -> Result<()> {
    io::write_trace(&dir.join(io::trace_file(seed)), trace)?;
    io::write_rows(&dir.join(io::trajectory_file(seed)), io::TRAJECTORY_HEADER, &io::trajectory_rows(trace))?;
    let users: Vec<UserRow> =
        env.topology().user_positions.iter().enumerate().map(|(user, p)| UserRow { user, x: p[0], y: p[1] }).collect();
    io::write_rows(&dir.join(io::USERS_FILE), io::USERS_HEADER, &users)
}

fn cmd_train(common: &Common, checkpoint: Option<PathBuf>) -> Result<Value> {
    let (cfg, over) = common.resolve()?;
    let seed = *cfg.seeds.first().ok_or_else(|| Error::Config("no seed given".into()))?;
    let policy = cfg.policies[0];
    let dir = cfg.output_dir.clone();
    io::write_json(&dir.join(io::RESOLVED_FILE), &cfg.resolved(&over)?)?;
    let start = Instant::now();
    let out = train(&cfg.scenario, &cfg.agent, policy, seed, |m| {
        eprintln!("episode {:>5}  return {:>10.3}  aaoi {:.4}", m.episode, m.ret, m.aaoi);
    })?;
    let ck_path = checkpoint.unwrap_or_else(|| dir.join("checkpoint.json"));
    Checkpoint {
        version: uavris_core::experiment::checkpoint::CHECKPOINT_VERSION,
        config_hash: cfg.hash(),
        seed,
        episodes: out.episodes.len(),
        scenario: cfg.scenario.clone(),
        bundle: out.bundle.clone(),
    }
    .save(&ck_path)?;
    let rows: Vec<EpisodeRow> = out.episodes.iter().map(|m| EpisodeRow::new(policy.name(), None, seed, m)).collect();
    io::write_rows(&dir.join(io::EPISODES_FILE), io::EPISODES_HEADER, &rows)?;
    if let Some((episode, what)) = out.diverged {
        eprintln!("last good parameters saved to {}", ck_path.display());
        return Err(Error::Diverged { episode, what });
    }
    let eval = evaluate(&out.bundle, &cfg.scenario, seed, cfg.agent.eval_episodes)?;
    write_traces(&dir, seed, &eval.trace, &Env::new(cfg.scenario.clone(), seed)?)?;
    let record = RunRecord {
        cell: Cell { policy, axis_value: None, seed },
        config_hash: cfg.hash(),
        violations: out.episodes.iter().map(|m| m.violations).sum::<usize>() + eval.violations(),
        episodes: out.episodes,
        eval_aaoi: eval.mean_aaoi(),
        eval_return: eval.mean_return(),
        diverged_at: None,
        wall_clock_s: start.elapsed().as_secs_f64(),
        trace: Vec::new(),
        bundle: None,
    };
    io::write_json(&dir.join("run.json"), &record)?;
    Ok(json!({
        "policy": policy,
        "seed": seed,
        "aaoi": record.eval_aaoi,
        "mean_return": record.eval_return,
        "violations": record.violations,
        "checkpoint": ck_path,
    }))
}

fn cmd_eval(checkpoint: &Path, seed: Option<u64>, episodes: Option<usize>, out: &Path) -> Result<Value> {
    let ck = Checkpoint::load(checkpoint)?;
    let seed = seed.unwrap_or(ck.seed);
    let eval = evaluate(&ck.bundle, &ck.scenario, seed, episodes.unwrap_or(20))?;
    let row = SummaryRow {
        policy: ck.bundle.policy.to_string(),
        axis: "none".into(),
        axis_value: None,
        seed,
        aaoi: Some(eval.mean_aaoi()),
        mean_return: Some(eval.mean_return()),
        violations: eval.violations(),
        status: "ok".into(),
    };
    io::write_rows(&out.join(io::SUMMARY_FILE), io::SUMMARY_HEADER, &[row])?;
    write_traces(out, seed, &eval.trace, &Env::new(ck.scenario.clone(), seed)?)?;
    Ok(json!({ "aaoi": eval.mean_aaoi(), "mean_return": eval.mean_return(), "violations": eval.violations() }))
}

fn cmd_sweep(common: &Common) -> Result<Value> {
    let (cfg, over) = common.resolve()?;
    let outcome = run_sweep(&cfg)?;
    write_sweep(&cfg.output_dir, &cfg.resolved(&over)?, &outcome)?;
    let failed = outcome.summary.iter().filter(|r| r.status != "ok").count();
    Ok(json!({ "cells": outcome.summary.len(), "failed": failed, "out": cfg.output_dir }))
}

fn cmd_oracle(seed: u64) -> Result<bool> {
    let reports = oracle::run_all(seed)?;
    for r in &reports {
        println!("{} {:<14} cases={:<4} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.cases, r.detail);
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn run(cli: Cli) -> Result<bool> {
    let summary = match cli.command {
        Command::Train { common, checkpoint } => cmd_train(&common, checkpoint)?,
        Command::Eval { checkpoint, seed, episodes, out } => cmd_eval(&checkpoint, seed, episodes, &out)?,
        Command::Sweep { common } => cmd_sweep(&common)?,
        Command::Oracle { seed } => return cmd_oracle(seed),
        Command::ResolveConfig { common } => {
            let (cfg, over) = common.resolve()?;
            serde_json::to_value(cfg.resolved(&over)?)?
        }
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", json!({ "error": "oracle", "message": "one or more oracle checks failed" }));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
