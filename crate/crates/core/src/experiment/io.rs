//! CSV and JSON outputs. Column names are the contract with the plotting
//! tools.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::train::EpisodeMetrics;
use crate::env::StepRecord;
use crate::error::Result;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const USERS_FILE: &str = "users.csv";
pub const RESOLVED_FILE: &str = "resolved_config.json";

pub fn trace_file(seed: u64) -> String {
    format!("trace_{seed}.csv")
}

pub fn trajectory_file(seed: u64) -> String {
    format!("trajectory_{seed}.csv")
}

/// One sweep cell's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub axis: String,
    pub axis_value: Option<f64>,
    pub seed: u64,
    pub aaoi: Option<f64>,
    pub mean_return: Option<f64>,
    pub violations: usize,
    /// `ok`, or the error kind when the cell failed.
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub policy: String,
    pub axis_value: Option<f64>,
    pub seed: u64,
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub aaoi: f64,
    pub epsilon: f64,
    pub ddqn_loss: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub violations: usize,
}

impl EpisodeRow {
    pub fn new(policy: &str, axis_value: Option<f64>, seed: u64, m: &EpisodeMetrics) -> Self {
        Self {
            policy: policy.to_string(),
            axis_value,
            seed,
            episode: m.episode,
            ret: m.ret,
            aaoi: m.aaoi,
            epsilon: m.epsilon,
            ddqn_loss: m.ddqn_loss,
            policy_loss: m.policy_loss,
            value_loss: m.value_loss,
            violations: m.violations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub slot: u64,
    pub uav: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub user: usize,
    pub x: f64,
    pub y: f64,
}

/// Writes `rows` with a header, even when there are none.
pub fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: &[&str] = &["policy", "axis", "axis_value", "seed", "aaoi", "mean_return", "violations", "status"];
pub const EPISODES_HEADER: &[&str] = &[
    "policy",
    "axis_value",
    "seed",
    "episode",
    "return",
    "aaoi",
    "epsilon",
    "ddqn_loss",
    "policy_loss",
    "value_loss",
    "violations",
];
pub const TRAJECTORY_HEADER: &[&str] = &["slot", "uav", "x", "y"];
pub const USERS_HEADER: &[&str] = &["user", "x", "y"];

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Per-slot trace: `slot, age_<u>..., rate_<u>..., x_<j>, y_<j>..., reward,
/// feasible`.
pub fn write_trace(path: &Path, trace: &[StepRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let users = trace.first().map_or(0, |r| r.ages.len());
    let uavs = trace.first().map_or(0, |r| r.positions.len());
    let mut header = vec!["slot".to_string()];
    header.extend((0..users).map(|u| format!("age_{u}")));
    header.extend((0..users).map(|u| format!("rate_{u}")));
    for j in 0..uavs {
        header.push(format!("x_{j}"));
        header.push(format!("y_{j}"));
    }
    header.push("reward".into());
    header.push("feasible".into());
    w.write_record(&header)?;
    for r in trace {
        let mut row = vec![r.slot.to_string()];
        row.extend(r.ages.iter().map(f64::to_string));
        row.extend(r.rates.iter().map(f64::to_string));
        for p in &r.positions {
            row.push(p[0].to_string());
            row.push(p[1].to_string());
        }
        row.push(r.reward.to_string());
        row.push(r.feasible.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trajectory_rows(trace: &[StepRecord]) -> Vec<TrajectoryRow> {
    trace
        .iter()
        .flat_map(|r| r.positions.iter().enumerate().map(move |(uav, p)| TrajectoryRow { slot: r.slot, uav, x: p[0], y: p[1] }))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;
    use crate::experiment::profiles::desk_scenario;

    #[test]
    fn empty_summary_still_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(SUMMARY_FILE);
        write_rows::<SummaryRow>(&p, SUMMARY_HEADER, &[]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().trim(), SUMMARY_HEADER.join(","));
        assert!(read_rows::<SummaryRow>(&p).unwrap().is_empty());
    }

    #[test]
    fn summary_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(SUMMARY_FILE);
        let rows = vec![
            SummaryRow {
                policy: "ours".into(),
                axis: "none".into(),
                axis_value: None,
                seed: 1,
                aaoi: Some(0.25),
                mean_return: Some(-30.0),
                violations: 0,
                status: "ok".into(),
            },
            SummaryRow {
                policy: "matching".into(),
                axis: "num_users".into(),
                axis_value: Some(4.0),
                seed: 2,
                aaoi: None,
                mean_return: None,
                violations: 0,
                status: "diverged".into(),
            },
        ];
        write_rows(&p, SUMMARY_HEADER, &rows).unwrap();
        assert_eq!(read_rows::<SummaryRow>(&p).unwrap(), rows);
    }

    #[test]
    fn trace_columns_match_network_size() {
        let mut env = Env::new(desk_scenario(), 1).unwrap();
        env.reset(1, 0).unwrap();
        let trace: Vec<_> = (0..3).map(|_| env.step(env.idle_decision()).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(trace_file(1));
        write_trace(&p, &trace).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        let header = r.headers().unwrap().clone();
        assert_eq!(header.len(), 1 + 2 * 6 + 2 * 2 + 2);
        assert_eq!(&header[1], "age_0");
        assert_eq!(&header[13], "x_0");
        assert_eq!(r.records().count(), 3);

        let rows = trajectory_rows(&trace);
        assert_eq!(rows.len(), 6);
        let tp = dir.path().join(trajectory_file(1));
        write_rows(&tp, TRAJECTORY_HEADER, &rows).unwrap();
        assert_eq!(read_rows::<TrajectoryRow>(&tp).unwrap(), rows);
    }
}
