//! Experiment configuration: a built-in profile with optional overrides from
//! a JSON or TOML file, validated, hashed and written back out in full.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::profiles::{desk_agent, desk_scenario, paper_agent, paper_scenario};
use crate::agents::train::AgentConfig;
use crate::baselines::PolicyKind;
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::InvalidArgument(format!("unknown profile {s:?}"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    None,
    NumUsers,
    MaxPower,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::NumUsers => "num_users",
            SweepAxis::MaxPower => "max_power",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    /// Axis values: user counts or total power budgets in dBm.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub scenario: ScenarioConfig,
    pub agent: AgentConfig,
    pub policies: Vec<PolicyKind>,
    pub sweep: SweepConfig,
    pub seeds: Vec<u64>,
    /// Sweep cells run concurrently on this many threads.
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_profile(profile: Profile) -> Self {
        let (scenario, agent) = match profile {
            Profile::Desk => (desk_scenario(), desk_agent()),
            Profile::Paper => (paper_scenario(), paper_agent()),
        };
        Self {
            profile,
            scenario,
            agent,
            policies: PolicyKind::ALL.to_vec(),
            sweep: SweepConfig { axis: SweepAxis::None, values: Vec::new() },
            seeds: vec![0, 1, 2, 3, 4],
            workers: 1,
            output_dir: PathBuf::from("runs"),
        }
    }

    /// Applies `overrides` (a partial document) on top of `profile`. The
    /// override may itself name a profile.
    pub fn from_overrides(profile: Profile, overrides: Value) -> Result<Self> {
        let profile = match overrides.get("profile") {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| Error::Config(format!("profile: {e}")))?,
            None => profile,
        };
        let mut doc = serde_json::to_value(Self::from_profile(profile))?;
        merge(&mut doc, overrides);
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads overrides from a `.toml` or `.json` file.
    pub fn load(path: &Path, profile: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let overrides: Value = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml_value(&text)?,
            _ => serde_json::from_str(&text)?,
        };
        Self::from_overrides(profile, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if self.policies.is_empty() {
            return bad("at least one policy is required");
        }
        let a = &self.agent;
        if a.ddqn.hidden.is_empty() || a.ppo.hidden.is_empty() || a.ddqn.batch_size == 0 || a.ppo.minibatch == 0 {
            return bad("agent network and batch sizes must be positive");
        }
        if !(0.0..=1.0).contains(&a.ddqn.tau) || !(0.0..=1.0).contains(&a.ddqn.gamma) || !(0.0..=1.0).contains(&a.ppo.gamma) {
            return bad("discounts and soft-update rates must lie in [0, 1]");
        }
        if a.ddqn.memory_capacity < a.ddqn.batch_size {
            return bad("memory_capacity must hold at least one batch");
        }
        match self.sweep.axis {
            SweepAxis::None if !self.sweep.values.is_empty() => bad("sweep values given without an axis"),
            SweepAxis::NumUsers if self.sweep.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) => {
                bad("num_users sweep values must be positive integers")
            }
            SweepAxis::MaxPower if self.sweep.values.iter().any(|v| !v.is_finite()) => bad("power sweep values must be finite"),
            SweepAxis::NumUsers | SweepAxis::MaxPower if self.sweep.values.is_empty() => bad("sweep axis without values"),
            _ => Ok(()),
        }
    }

    /// Scenario for one point of the sweep axis.
    pub fn scenario_at(&self, axis_value: Option<f64>) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        match (self.sweep.axis, axis_value) {
            (SweepAxis::NumUsers, Some(v)) => s.num_users = v as usize,
            (SweepAxis::MaxPower, Some(v)) => s.max_power_dbm = v,
            _ => {}
        }
        s
    }

    /// SHA-256 of the canonical JSON encoding, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v["output_dir"] = Value::Null;
        let canonical = serde_json::to_vec(&v).expect("json");
        hex::encode(Sha256::digest(canonical))
    }

    /// The full configuration with the origin of every leaf value.
    pub fn resolved(&self, overrides: &Value) -> Result<ResolvedConfig> {
        let config = serde_json::to_value(self)?;
        let mut provenance = BTreeMap::new();
        let mut leaves = Vec::new();
        collect_leaves(&config, String::new(), &mut leaves);
        for path in leaves {
            let origin = if lookup(overrides, &path).is_some() {
                Origin::Override
            } else if is_assumption(&path) {
                Origin::Assumption
            } else {
                Origin::Reference
            };
            provenance.insert(path, origin);
        }
        Ok(ResolvedConfig { hash: self.hash(), config: self.clone(), provenance })
    }
}

/// Where a configuration value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Reference system setup.
    Reference,
    /// Our choice where the reference setup is silent or out of reach at
    /// this scale.
    Assumption,
    /// Supplied by the user.
    Override,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub hash: String,
    pub config: ExperimentConfig,
    pub provenance: BTreeMap<String, Origin>,
}

/// Leaves chosen here rather than taken from the reference setup.
const ASSUMPTIONS: &[&str] = &[
    "profile",
    "scenario.num_uavs",
    "scenario.coverage_radius",
    "scenario.slot_duration",
    "scenario.carrier_frequency",
    "scenario.ref_path_gain_db",
    "scenario.pathloss_exp_nlos",
    "scenario.pathloss_exp_los",
    "scenario.single_pathloss_exp",
    "scenario.noise_power",
    "scenario.interference",
    "scenario.arrival_rate",
    "scenario.packet_size",
    "scenario.reward",
    "scenario.candidate_width",
    "scenario.phase_mode",
    "scenario.min_amplitude",
    "agent.episodes",
    "agent.eval_episodes",
    "agent.ddqn.lr",
    "agent.ddqn.warmup",
    "agent.ddqn.train_interval",
    "agent.ddqn.grad_clip",
    "agent.ddqn.epsilon_start",
    "agent.ddqn.epsilon_end",
    "agent.ddqn.epsilon_decay_fraction",
    "agent.ppo.gae_lambda",
    "agent.ppo.epochs",
    "agent.ppo.minibatch",
    "agent.ppo.grad_clip",
    "agent.ppo.init_log_std",
    "agent.ppo.init_output_scale",
    "policies",
    "sweep",
    "seeds",
    "workers",
    "output_dir",
];

fn is_assumption(path: &str) -> bool {
    ASSUMPTIONS.iter().any(|a| path == *a || path.starts_with(&format!("{a}.")))
}

/// Parses a TOML document into the JSON value model used for merging.
pub fn toml_value(text: &str) -> Result<Value> {
    Ok(toml::from_str(text)?)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    // Unknown keys survive the merge so deserialization rejects them.
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn collect_leaves(v: &Value, prefix: String, out: &mut Vec<String>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                collect_leaves(child, p, out);
            }
        }
        _ => out.push(prefix),
    }
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |cur, key| cur.get(key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn profiles_validate() {
        ExperimentConfig::from_profile(Profile::Desk).validate().unwrap();
        ExperimentConfig::from_profile(Profile::Paper).validate().unwrap();
    }

    #[test]
    fn overrides_merge_into_profile() {
        let cfg = ExperimentConfig::from_overrides(
            Profile::Desk,
            json!({"scenario": {"num_users": 9}, "agent": {"ddqn": {"gamma": 0.5}}, "seeds": [7]}),
        )
        .unwrap();
        assert_eq!(cfg.scenario.num_users, 9);
        assert_eq!(cfg.agent.ddqn.gamma, 0.5);
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.scenario.num_elements, desk_scenario().num_elements);
    }

    #[test]
    fn profile_can_come_from_the_file() {
        let cfg = ExperimentConfig::from_overrides(Profile::Desk, json!({"profile": "paper"})).unwrap();
        assert_eq!(cfg.scenario, paper_scenario());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [json!({"scenario": {"num_user": 3}}), json!({"extra": 1}), json!({"agent": {"ppo": {"lr": 1.0}}})] {
            let err = ExperimentConfig::from_overrides(Profile::Desk, bad).unwrap_err();
            assert_eq!(err.kind(), "config");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for bad in [
            json!({"workers": 0}),
            json!({"sweep": {"axis": "num_users", "values": [2.5]}}),
            json!({"sweep": {"axis": "max_power", "values": []}}),
            json!({"scenario": {"num_subcarriers": 0}}),
            json!({"policies": []}),
        ] {
            assert!(ExperimentConfig::from_overrides(Profile::Desk, bad.clone()).is_err(), "{bad}");
        }
    }

    #[test]
    fn toml_and_json_files_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        let j = dir.path().join("c.json");
        std::fs::write(&t, "seeds = [3, 4]\n[scenario]\nmax_power_dbm = 15.0\n").unwrap();
        std::fs::write(&j, r#"{"seeds": [3, 4], "scenario": {"max_power_dbm": 15.0}}"#).unwrap();
        let a = ExperimentConfig::load(&t, Profile::Desk).unwrap();
        let b = ExperimentConfig::load(&j, Profile::Desk).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_profile(Profile::Desk);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.scenario.num_users += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn resolved_config_tags_every_leaf() {
        let over = json!({"scenario": {"num_users": 5}});
        let cfg = ExperimentConfig::from_overrides(Profile::Desk, over.clone()).unwrap();
        let r = cfg.resolved(&over).unwrap();
        let mut leaves = Vec::new();
        collect_leaves(&serde_json::to_value(&cfg).unwrap(), String::new(), &mut leaves);
        assert_eq!(r.provenance.len(), leaves.len());
        assert_eq!(r.provenance["scenario.num_users"], Origin::Override);
        assert_eq!(r.provenance["scenario.num_elements"], Origin::Reference);
        assert_eq!(r.provenance["agent.ddqn.epsilon_decay_fraction"], Origin::Assumption);
        let back: ResolvedConfig = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn sweep_points_change_one_field() {
        let mut cfg = ExperimentConfig::from_profile(Profile::Desk);
        cfg.sweep = SweepConfig { axis: SweepAxis::NumUsers, values: vec![4.0] };
        assert_eq!(cfg.scenario_at(Some(4.0)).num_users, 4);
        cfg.sweep.axis = SweepAxis::MaxPower;
        assert_eq!(cfg.scenario_at(Some(10.0)).max_power_dbm, 10.0);
        assert_eq!(cfg.scenario_at(None), cfg.scenario);
    }
}
