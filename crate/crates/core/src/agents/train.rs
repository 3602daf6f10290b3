//! Observations, per-slot action assembly, and the joint training and
//! evaluation loops.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ddqn::{DdqnAgent, DdqnConfig, Transition};
use super::ppo::{PpoAgent, PpoConfig, PpoSample, Rollout};
use super::replay::Replay;
use crate::aoi::objective_aaoi;
use crate::baselines::{matching_assignment, null_reflection, random_step, uniform_power, PolicyKind};
use crate::env::{decode_continuous, encode_discrete, CandidateTable, ContinuousAction, ContinuousLayout, Env, StepRecord};
use crate::error::{Error, Result};
use crate::noma::LinkDecision;
use crate::rng::{stream_rng, Stream, StreamRng};
use crate::scenario::ScenarioConfig;

/// Episode indices at and above this value are reserved for evaluation.
pub const EVAL_EPISODE_BASE: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub episodes: usize,
    pub eval_episodes: usize,
    pub ddqn: DdqnConfig,
    pub ppo: PpoConfig,
}

/// Per-candidate features: age, backlog, link quality, sub-carriers already
/// taken in this slot.
const CANDIDATE_FEATURES: usize = 4;

pub fn discrete_obs_dim(cfg: &ScenarioConfig) -> usize {
    2 * cfg.num_uavs + 2 * cfg.num_users + CANDIDATE_FEATURES * cfg.effective_candidates() + cfg.num_subcarriers
}

pub fn continuous_obs_dim(cfg: &ScenarioConfig) -> usize {
    2 * cfg.num_uavs + 2 * cfg.num_users + cfg.num_users * cfg.num_subcarriers + cfg.num_users
}

/// Link quality in `[0, 1]` from the expected SNR.
fn snr_feature(snr: f64) -> f64 {
    ((1.0 + snr).log10() / 5.0).clamp(0.0, 1.0)
}

fn discrete_obs(env: &Env, base: &[f64], snr: &[f64], table: &CandidateTable, taken: &[usize], n: usize) -> Vec<f64> {
    let cfg = env.config();
    let aoi = &env.state().aoi;
    let mut f = base.to_vec();
    for c in 0..cfg.effective_candidates() {
        let u = table.candidates[c];
        f.push(env.age_feature(aoi.age_slots[u]));
        f.push(env.backlog_feature(aoi.backlog[u]));
        f.push(snr[u]);
        f.push(taken[c] as f64 / cfg.num_subcarriers as f64);
    }
    f.extend((0..cfg.num_subcarriers).map(|m| if m == n { 1.0 } else { 0.0 }));
    f
}

fn continuous_obs(base: &[f64], snr: &[f64], assignment: &Array2<bool>) -> Vec<f64> {
    let mut f = base.to_vec();
    f.extend(assignment.iter().map(|&a| if a { 1.0 } else { 0.0 }));
    f.extend_from_slice(snr);
    f
}

/// Continuous controls owned by the learner under `policy`.
pub fn layout_for(cfg: &ScenarioConfig, policy: PolicyKind) -> ContinuousLayout {
    ContinuousLayout {
        uav: policy.learns_uav(),
        reflection: policy.learns_reflection(),
        power: policy.learns_power(),
        ..ContinuousLayout::full(cfg)
    }
}

/// Everything needed to act: the learners and how their outputs map onto a
/// decision.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentBundle {
    pub policy: PolicyKind,
    pub layout: ContinuousLayout,
    pub ddqn: Option<DdqnAgent>,
    pub ppo: PpoAgent,
}

impl AgentBundle {
    pub fn new(cfg: &ScenarioConfig, agent: &AgentConfig, policy: PolicyKind, seed: u64) -> Self {
        let layout = layout_for(cfg, policy);
        let ddqn = policy.learns_assignment().then(|| {
            let actions = crate::env::subset_count(cfg.effective_candidates(), cfg.cluster_size);
            DdqnAgent::new(discrete_obs_dim(cfg), actions, agent.ddqn.clone(), &mut stream_rng(seed, Stream::NetInit, 0))
        });
        let ppo =
            PpoAgent::new(continuous_obs_dim(cfg), layout.dim(), agent.ppo.clone(), &mut stream_rng(seed, Stream::NetInit, 1));
        Self { policy, layout, ddqn, ppo }
    }

    pub fn is_finite(&self) -> bool {
        self.ppo.is_finite() && self.ddqn.as_ref().map_or(true, |d| d.main.is_finite() && d.target.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    /// Epsilon-greedy assignment, sampled continuous controls.
    Explore(f64),
    /// Greedy assignment, mean continuous controls.
    Greedy,
    /// Uniform assignment and uniform continuous controls.
    Random,
}

/// Random streams consumed while acting.
pub struct ActRngs {
    pub exploration: StreamRng,
    pub policy: StreamRng,
    pub trajectory: StreamRng,
}

impl ActRngs {
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            exploration: stream_rng(seed, Stream::Exploration, index),
            policy: stream_rng(seed, Stream::Policy, index),
            trajectory: stream_rng(seed, Stream::Trajectory, index),
        }
    }
}

/// One slot's decision with what the learners need to remember about it.
pub struct Acted {
    pub decision: LinkDecision,
    pub micro_obs: Vec<Vec<f64>>,
    pub choices: Vec<usize>,
    pub con_obs: Vec<f64>,
    pub sample: Option<PpoSample>,
}

fn link_snr(env: &Env) -> Vec<f64> {
    (0..env.config().num_users).map(|u| snr_feature(env.expected_snr(u))).collect()
}

/// Builds this slot's decision from the current state. `gains` holds the last
/// realized per-user, per-sub-carrier channel gains (used by matching).
pub fn act(bundle: &AgentBundle, env: &Env, gains: &Array2<f64>, mode: Mode, rngs: &mut ActRngs) -> Result<Acted> {
    let cfg = env.config();
    let state = env.state();
    let base = env.features();
    let snr = link_snr(env);
    let n_sc = cfg.num_subcarriers;
    let table = encode_discrete(&state.aoi.age_slots, &state.aoi.backlog, cfg.candidate_width, cfg.cluster_size);

    let mut micro_obs = Vec::new();
    let mut choices = Vec::new();
    let assignment = match &bundle.ddqn {
        Some(ddqn) => {
            let explore = match mode {
                Mode::Explore(eps) => rngs.exploration.gen::<f64>() < eps,
                Mode::Greedy => false,
                Mode::Random => true,
            };
            let mut taken = vec![0usize; table.candidates.len()];
            for n in 0..n_sc {
                let obs = discrete_obs(env, &base, &snr, &table, &taken, n);
                let c = if explore { rngs.exploration.gen_range(0..table.len()) } else { ddqn.greedy(&obs) };
                for &i in &table.subsets[c] {
                    taken[i] += 1;
                }
                micro_obs.push(obs);
                choices.push(c);
            }
            table.decode(&choices, cfg.num_users)?
        }
        None => matching_assignment(&state.aoi.backlog, &state.aoi.age_slots, gains, cfg.cluster_size),
    };

    let con_obs = continuous_obs(&base, &snr, &assignment);
    let (raw, sample) = match mode {
        Mode::Explore(_) => {
            let s = bundle.ppo.sample(&con_obs, &mut rngs.policy);
            (s.action.clone(), Some(s))
        }
        Mode::Greedy => (bundle.ppo.mean_action(&con_obs), None),
        Mode::Random => ((0..bundle.layout.dim()).map(|_| rngs.policy.gen_range(-1.0..=1.0)).collect(), None),
    };
    let action = ContinuousAction::from_flat(&bundle.layout, &raw)?;
    let decoded = decode_continuous(&action, &bundle.layout, cfg, &assignment);
    let limits = env.limits();
    let uav_delta = decoded
        .uav_delta
        .unwrap_or_else(|| (0..cfg.num_uavs).map(|_| random_step(cfg.max_step(), &mut rngs.trajectory)).collect());
    let reflection = decoded.reflection.unwrap_or_else(|| null_reflection(cfg.num_uavs, cfg.num_elements));
    let power = decoded.power.unwrap_or_else(|| uniform_power(&assignment, &limits.power_mask, limits.max_power));
    Ok(Acted { decision: LinkDecision { assignment, power, reflection, uav_delta }, micro_obs, choices, con_obs, sample })
}

/// Expected per-user gain at the current pose, the same on every sub-carrier;
/// stands in for realized gains before the first slot.
fn initial_gains(env: &Env) -> Array2<f64> {
    let cfg = env.config();
    Array2::from_shape_fn((cfg.num_users, cfg.num_subcarriers), |(u, _)| env.expected_snr(u))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub aaoi: f64,
    pub epsilon: f64,
    /// Mean loss of this episode's Q updates; empty before the first update.
    pub ddqn_loss: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub violations: usize,
}

pub struct TrainOutcome {
    /// Last parameters known to be finite.
    pub bundle: AgentBundle,
    pub episodes: Vec<EpisodeMetrics>,
    /// Set when a loss went non-finite; training stopped at that episode.
    pub diverged: Option<(usize, &'static str)>,
    /// Slots stored in the replay memory over the whole run.
    pub stored_slots: u64,
}

struct EpisodeRun {
    ret: f64,
    aaoi: f64,
    violations: usize,
    records: Vec<StepRecord>,
}

/// Trains the learners of `policy` on the scenario, one seed. `on_episode`
/// sees every episode's metrics as they are produced.
pub fn train(
    scn: &ScenarioConfig,
    agent: &AgentConfig,
    policy: PolicyKind,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeMetrics),
) -> Result<TrainOutcome> {
    let mut env = Env::new(scn.clone(), seed)?;
    let mut bundle = AgentBundle::new(scn, agent, policy, seed);
    let mut last_good = bundle.clone();
    let dcfg = &agent.ddqn;
    let mut replay: Replay<Vec<Transition>> = Replay::new(dcfg.memory_capacity);
    let mut replay_rng = stream_rng(seed, Stream::Replay, 0);
    let mut update_rng = stream_rng(seed, Stream::Policy, u64::MAX);
    let mut rollout = Rollout::default();
    let mut metrics = Vec::with_capacity(agent.episodes);
    let mut slots_total: u64 = 0;

    for ep in 0..agent.episodes {
        env.reset(seed, ep as u64)?;
        let eps = dcfg.epsilon(ep, agent.episodes);
        let mut rngs = ActRngs::new(seed, ep as u64);
        let mut gains = initial_gains(&env);
        let (mut ret, mut violations) = (0.0, 0);
        let mut ages = Vec::with_capacity(scn.slots_per_episode);
        let (mut q_loss, mut q_updates) = (0.0, 0usize);

        while !env.done() {
            let acted = act(&bundle, &env, &gains, Mode::Explore(eps), &mut rngs)?;
            let rec = env.step(acted.decision)?;
            violations += usize::from(!rec.feasible);
            gains = rec.gains.clone();
            let terminal = env.done();
            ret += rec.reward;
            ages.push(rec.ages.clone());
            slots_total += 1;

            if let Some(ddqn) = bundle.ddqn.as_mut() {
                let next0 = if terminal {
                    vec![0.0; acted.micro_obs[0].len()]
                } else {
                    let table = encode_discrete(&env.state().aoi.age_slots, &env.state().aoi.backlog, scn.candidate_width, scn.cluster_size);
                    let taken = vec![0; table.candidates.len()];
                    discrete_obs(&env, &env.features(), &link_snr(&env), &table, &taken, 0)
                };
                let n_sc = acted.choices.len();
                let slot: Vec<Transition> = (0..n_sc)
                    .map(|n| {
                        let last = n + 1 == n_sc;
                        Transition {
                            obs: acted.micro_obs[n].clone(),
                            action: acted.choices[n],
                            reward: if last { rec.reward } else { 0.0 },
                            discount: if last { dcfg.gamma } else { 1.0 },
                            next_obs: if last { next0.clone() } else { acted.micro_obs[n + 1].clone() },
                            terminal: last && terminal,
                        }
                    })
                    .collect();
                replay.push(slot);
                if replay.len() > dcfg.warmup && slots_total % dcfg.train_interval.max(1) as u64 == 0 {
                    let batch: Vec<&Transition> = replay
                        .sample(dcfg.batch_size, &mut replay_rng)
                        .into_iter()
                        .map(|s| &s[replay_rng.gen_range(0..s.len())])
                        .collect();
                    q_loss += ddqn.update(&batch);
                    q_updates += 1;
                }
            }

            let s = acted.sample.expect("exploration samples the policy");
            rollout.obs.push(acted.con_obs);
            rollout.pre.push(s.pre);
            rollout.rewards.push(rec.reward);
            rollout.values.push(s.value);
            rollout.dones.push(terminal);
        }

        let (p_loss, v_loss) = bundle.ppo.update(&rollout, 0.0, &mut update_rng);
        rollout.clear();
        let ddqn_loss = (q_updates > 0).then(|| q_loss / q_updates as f64);
        let m = EpisodeMetrics {
            episode: ep,
            ret,
            aaoi: objective_aaoi(&ages),
            epsilon: eps,
            ddqn_loss,
            policy_loss: p_loss,
            value_loss: v_loss,
            violations,
        };
        let bad = if ddqn_loss.is_some_and(|l| !l.is_finite()) {
            Some("ddqn")
        } else if !p_loss.is_finite() {
            Some("policy")
        } else if !v_loss.is_finite() {
            Some("value")
        } else if !bundle.is_finite() {
            Some("parameter")
        } else {
            None
        };
        if let Some(what) = bad {
            return Ok(TrainOutcome {
                bundle: last_good,
                episodes: metrics,
                diverged: Some((ep, what)),
                stored_slots: replay.pushed(),
            });
        }
        on_episode(&m);
        metrics.push(m);
        last_good = bundle.clone();
    }
    Ok(TrainOutcome { bundle, episodes: metrics, diverged: None, stored_slots: replay.pushed() })
}

fn run_episode(bundle: &AgentBundle, env: &mut Env, seed: u64, episode: u64, mode: Mode, keep: bool) -> Result<EpisodeRun> {
    env.reset(seed, episode)?;
    let mut rngs = ActRngs::new(seed, episode);
    let mut gains = initial_gains(env);
    let (mut ret, mut violations) = (0.0, 0);
    let mut ages = Vec::new();
    let mut records = Vec::new();
    while !env.done() {
        let acted = act(bundle, env, &gains, mode, &mut rngs)?;
        let rec = env.step(acted.decision)?;
        violations += usize::from(!rec.feasible);
        gains = rec.gains.clone();
        ret += rec.reward;
        ages.push(rec.ages.clone());
        if keep {
            records.push(rec);
        }
    }
    Ok(EpisodeRun { ret, aaoi: objective_aaoi(&ages), violations, records })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub episode: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub aaoi: f64,
    pub violations: usize,
}

pub struct EvalOutcome {
    pub episodes: Vec<EvalEpisode>,
    /// Per-slot records of the first evaluation episode.
    pub trace: Vec<StepRecord>,
}

impl EvalOutcome {
    pub fn mean_aaoi(&self) -> f64 {
        self.episodes.iter().map(|e| e.aaoi).sum::<f64>() / self.episodes.len().max(1) as f64
    }

    pub fn mean_return(&self) -> f64 {
        self.episodes.iter().map(|e| e.ret).sum::<f64>() / self.episodes.len().max(1) as f64
    }

    pub fn violations(&self) -> usize {
        self.episodes.iter().map(|e| e.violations).sum()
    }
}

/// Runs a frozen bundle: greedy assignment, mean continuous controls, on
/// episodes never used for training.
pub fn evaluate(bundle: &AgentBundle, scn: &ScenarioConfig, seed: u64, episodes: usize) -> Result<EvalOutcome> {
    rollout_many(bundle, scn, seed, episodes, Mode::Greedy)
}

/// Mean return and AAoI of uniformly random decisions over the full action
/// space.
pub fn random_policy(scn: &ScenarioConfig, agent: &AgentConfig, seed: u64, episodes: usize) -> Result<EvalOutcome> {
    let bundle = AgentBundle::new(scn, agent, PolicyKind::Ours, seed);
    rollout_many(&bundle, scn, seed, episodes, Mode::Random)
}

fn rollout_many(bundle: &AgentBundle, scn: &ScenarioConfig, seed: u64, episodes: usize, mode: Mode) -> Result<EvalOutcome> {
    if bundle.layout != layout_for(scn, bundle.policy) {
        return Err(Error::Checkpoint("agent was trained for a different scenario shape".into()));
    }
    let mut env = Env::new(scn.clone(), seed)?;
    let mut out = Vec::with_capacity(episodes);
    let mut trace = Vec::new();
    for e in 0..episodes {
        let episode = EVAL_EPISODE_BASE + e as u64;
        let run = run_episode(bundle, &mut env, seed, episode, mode, e == 0)?;
        if e == 0 {
            trace = run.records;
        }
        out.push(EvalEpisode { episode, ret: run.ret, aaoi: run.aaoi, violations: run.violations });
    }
    Ok(EvalOutcome { episodes: out, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::profiles::{desk_agent, desk_scenario};

    fn smoke() -> (ScenarioConfig, AgentConfig) {
        let mut scn = desk_scenario();
        scn.num_users = 4;
        scn.num_uavs = 1;
        scn.num_elements = 8;
        scn.num_subcarriers = 2;
        scn.slots_per_episode = 100;
        let mut agent = desk_agent();
        agent.episodes = 50;
        (scn, agent)
    }

    #[test]
    fn zero_episodes_leave_nets_untouched() {
        let (scn, mut agent) = smoke();
        agent.episodes = 0;
        let out = train(&scn, &agent, PolicyKind::Ours, 1, |_| {}).unwrap();
        assert!(out.episodes.is_empty());
        let fresh = AgentBundle::new(&scn, &agent, PolicyKind::Ours, 1);
        assert_eq!(out.bundle.ppo.actor, fresh.ppo.actor);
        assert_eq!(out.bundle.ddqn.unwrap().main, fresh.ddqn.unwrap().main);
    }

    #[test]
    fn replay_accounting_matches_slots() {
        let (scn, mut agent) = smoke();
        agent.episodes = 3;
        agent.ddqn.memory_capacity = 250;
        let out = train(&scn, &agent, PolicyKind::Ours, 2, |_| {}).unwrap();
        assert_eq!(out.stored_slots, 300);
        assert!(out.episodes.iter().all(|m| m.violations == 0));
    }

    #[test]
    fn observation_sizes_match_networks() {
        let scn = desk_scenario();
        let agent = desk_agent();
        for p in PolicyKind::ALL {
            let b = AgentBundle::new(&scn, &agent, p, 1);
            assert_eq!(b.ppo.actor.input_dim(), continuous_obs_dim(&scn));
            assert_eq!(b.ddqn.is_some(), p != PolicyKind::Matching);
            if let Some(d) = &b.ddqn {
                assert_eq!(d.main.input_dim(), discrete_obs_dim(&scn));
                assert_eq!(d.num_actions(), 22);
            }
        }
    }

    #[test]
    fn training_is_reproducible() {
        let (scn, mut agent) = smoke();
        agent.episodes = 3;
        let a = train(&scn, &agent, PolicyKind::Ours, 3, |_| {}).unwrap();
        let b = train(&scn, &agent, PolicyKind::Ours, 3, |_| {}).unwrap();
        assert_eq!(a.episodes, b.episodes);
    }

    #[test]
    fn smoke_run_improves() {
        let (scn, agent) = smoke();
        let out = train(&scn, &agent, PolicyKind::Ours, 4, |_| {}).unwrap();
        assert!(out.diverged.is_none());
        let returns: Vec<f64> = out.episodes.iter().map(|m| m.ret).collect();
        let ma: Vec<f64> = returns.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        let decile = (returns.len() / 10).max(1);
        let first = ma[..decile].iter().sum::<f64>() / decile as f64;
        let last = ma[ma.len() - decile..].iter().sum::<f64>() / decile as f64;
        assert!(last >= first, "first {first}, last {last}");
    }
}
