//! Slot-level environment: reset, observation features and the step that
//! moves UAVs, draws channels, schedules transmissions and ages users.

pub mod action;

use ndarray::{Array2, Array3, Array4};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aoi::{generate_traffic, step_aoi, step_reward, AoiState};
use crate::error::{Error, Result};
use crate::noma::{all_rates, validate_decision, LinkDecision, LinkLimits, Receiver};
use crate::phys::{
    check_move, compose_effective_channel, expected_snr, project_uav_move, sample_direct_channel,
    sample_ue_uav_channel, uav_cu_channel, ChannelParams, ChannelRealization, NetworkTopology, ReflectionConfig,
    UavPose,
};
use crate::rng::{stream_rng, Stream, StreamRng};
use crate::scenario::ScenarioConfig;

pub use action::{
    decode_continuous, encode_discrete, subset_count, CandidateTable, ContinuousAction, ContinuousLayout,
    DecodedControls,
};

const PLACEMENT_TRIES: usize = 10_000;

/// What the agent sees: previous UAV positions, backlogs and ages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub pose: UavPose,
    pub aoi: AoiState,
    pub slot: u64,
}

/// Small-scale fading and the deterministic relay links for one pose, before
/// the reflection configuration is applied.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkDraw {
    pub pose: UavPose,
    pub direct: Array3<Complex64>,
    pub ue_uav: Array4<Complex64>,
    pub uav_cu: Array3<Complex64>,
}

/// Result of scoring one decision against one draw; the environment state is
/// untouched.
#[derive(Clone, Debug)]
pub struct SlotOutcome {
    pub channels: ChannelRealization,
    pub rates: Vec<f64>,
    pub aoi: AoiState,
    pub delivered: Vec<bool>,
    pub ages: Vec<f64>,
    pub reward: f64,
}

/// Per-slot trace row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub slot: u64,
    pub ages: Vec<f64>,
    pub rates: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub reward: f64,
    pub feasible: bool,
    pub delivered: Vec<bool>,
    /// Users that actually transmitted.
    pub scheduled: usize,
    /// Realized effective channel gain per user and sub-carrier.
    pub gains: Array2<f64>,
}

pub struct Env {
    cfg: ScenarioConfig,
    topo: NetworkTopology,
    channel: ChannelParams,
    limits: LinkLimits,
    rx: Receiver,
    state: EnvState,
    fading: StreamRng,
    arrivals: StreamRng,
}

impl Env {
    /// Builds the network; user positions depend only on `layout_seed`.
    pub fn new(cfg: ScenarioConfig, layout_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(layout_seed, Stream::Layout, 0);
        let half = cfg.arena_size / 2.0;
        let users = (0..cfg.num_users)
            .map(|_| [rng.gen_range(-half..=half), rng.gen_range(-half..=half), 0.0])
            .collect();
        Self::with_users(cfg, users)
    }

    pub fn with_users(cfg: ScenarioConfig, users: Vec<[f64; 3]>) -> Result<Self> {
        cfg.validate()?;
        if users.len() != cfg.num_users {
            return Err(Error::Dimension(format!("{} user positions for {} users", users.len(), cfg.num_users)));
        }
        let topo = cfg.topology(users);
        topo.validate()?;
        let state = EnvState {
            pose: UavPose { positions: vec![[0.0, 0.0]; cfg.num_uavs], altitude: cfg.uav_altitude },
            aoi: AoiState::new(cfg.num_users),
            slot: 0,
        };
        Ok(Self {
            channel: cfg.channel(),
            limits: cfg.limits(),
            rx: cfg.receiver(),
            topo,
            cfg,
            state,
            fading: stream_rng(0, Stream::Fading, 0),
            arrivals: stream_rng(0, Stream::Traffic, 0),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topo
    }

    pub fn channel_params(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn limits(&self) -> &LinkLimits {
        &self.limits
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn done(&self) -> bool {
        self.state.slot as usize >= self.cfg.slots_per_episode
    }

    /// Starts episode `episode` of run `seed`: UAVs uniform over the feasible
    /// disc with the separation enforced by rejection, ages at one slot,
    /// queues empty.
    pub fn reset(&mut self, seed: u64, episode: u64) -> Result<&EnvState> {
        let mut rng = stream_rng(seed, Stream::UavInit, episode);
        let r_h = self.topo.horizontal_radius();
        let dmin2 = self.topo.min_uav_separation.powi(2);
        let mut positions: Vec<[f64; 2]> = Vec::with_capacity(self.cfg.num_uavs);
        let mut tries = 0;
        while positions.len() < self.cfg.num_uavs {
            if tries == PLACEMENT_TRIES {
                return Err(Error::Placement { uavs: self.cfg.num_uavs, tries });
            }
            tries += 1;
            let r = r_h * rng.gen::<f64>().sqrt();
            let phi = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let p = [r * phi.cos(), r * phi.sin()];
            if positions.iter().all(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) >= dmin2) {
                positions.push(p);
            }
        }
        self.state = EnvState {
            pose: UavPose { positions, altitude: self.cfg.uav_altitude },
            aoi: AoiState::new(self.cfg.num_users),
            slot: 0,
        };
        self.fading = stream_rng(seed, Stream::Fading, episode);
        self.arrivals = stream_rng(seed, Stream::Traffic, episode);
        Ok(&self.state)
    }

    /// `2J + 2U` features in `[-1, 1]`: UAV positions over `r_max`, then
    /// [`Env::backlog_feature`] and [`Env::age_feature`] per user.
    pub fn features(&self) -> Vec<f64> {
        let s = &self.state;
        let mut f = Vec::with_capacity(2 * self.cfg.num_uavs + 2 * self.cfg.num_users);
        for p in &s.pose.positions {
            f.push((p[0] / self.cfg.coverage_radius).clamp(-1.0, 1.0));
            f.push((p[1] / self.cfg.coverage_radius).clamp(-1.0, 1.0));
        }
        for &b in &s.aoi.backlog {
            f.push(self.backlog_feature(b));
        }
        for &a in &s.aoi.age_slots {
            f.push(self.age_feature(a));
        }
        f
    }

    /// Queued packets `x` mapped to `x / (1 + x)`.
    pub fn backlog_feature(&self, backlog: u64) -> f64 {
        let x = backlog as f64 / self.cfg.packet_size;
        x / (1.0 + x)
    }

    /// Age on a log scale that reaches 1 at the episode length, so small ages
    /// stay distinguishable.
    pub fn age_feature(&self, age_slots: u64) -> f64 {
        ((age_slots as f64).ln_1p() / (self.cfg.slots_per_episode as f64).ln_1p()).min(1.0)
    }

    /// Expected SNR of user `u` at full mask power with every UAV coherently
    /// aligned, under the current pose.
    pub fn expected_snr(&self, u: usize) -> f64 {
        expected_snr(&self.topo, &self.channel, &self.state.pose, u, 1.0, self.limits.power_mask[0])
    }

    /// Decision with nothing scheduled, UAVs at rest and unit reflection.
    pub fn idle_decision(&self) -> LinkDecision {
        LinkDecision::idle(
            self.cfg.num_users,
            self.cfg.num_subcarriers,
            ReflectionConfig::uniform(self.cfg.num_uavs, self.cfg.num_elements, 1.0, 0.0),
        )
    }

    /// Removes users with nothing to send and checks C4–C6, C8–C10.
    pub fn prepare(&self, mut decision: LinkDecision) -> Result<LinkDecision> {
        for u in 0..decision.num_users().min(self.cfg.num_users) {
            if self.state.aoi.backlog[u] == 0 {
                decision.drop_user(u);
            }
        }
        validate_decision(&decision, &self.limits).map_err(Error::Infeasible)?;
        if decision.reflection.num_uavs() != self.cfg.num_uavs
            || decision.reflection.num_elements() != self.cfg.num_elements
            || decision.num_users() != self.cfg.num_users
        {
            return Err(Error::Dimension("decision does not match the scenario".into()));
        }
        Ok(decision)
    }

    /// Projects the requested displacements onto C1–C3.
    pub fn next_pose(&self, deltas: &[[f64; 2]]) -> Result<UavPose> {
        project_uav_move(&self.topo, &self.state.pose, deltas)
    }

    /// Draws this slot's fading for `pose`, advancing the fading stream.
    pub fn draw(&mut self, pose: &UavPose) -> Result<LinkDraw> {
        let direct = sample_direct_channel(&self.topo, &self.channel, &mut self.fading);
        let ue_uav = sample_ue_uav_channel(&self.topo, pose, &self.channel, &mut self.fading);
        let uav_cu = uav_cu_channel(&self.topo, pose, &self.channel)?;
        Ok(LinkDraw { pose: pose.clone(), direct, ue_uav, uav_cu })
    }

    /// Scores an already prepared decision against a draw.
    pub fn evaluate(&self, decision: &LinkDecision, draw: &LinkDraw) -> Result<SlotOutcome> {
        let channels =
            compose_effective_channel(draw.direct.clone(), draw.ue_uav.clone(), draw.uav_cu.clone(), &decision.reflection)?;
        if !channels.is_finite() {
            return Err(Error::NonFinite("channel realization"));
        }
        let (_, rates) = all_rates(&channels, decision, &self.rx)?;
        let mut aoi = self.state.aoi.clone();
        let delivered = step_aoi(&mut aoi, &rates, self.state.slot, self.cfg.slot_duration);
        let ages = aoi.ages(self.cfg.slot_duration);
        let reward = step_reward(&ages, self.cfg.reward);
        Ok(SlotOutcome { channels, rates, aoi, delivered, ages, reward })
    }

    /// One slot: move, fade, compose, decode, age, score, then arrivals for
    /// the next slot.
    pub fn step(&mut self, decision: LinkDecision) -> Result<StepRecord> {
        let pose = self.next_pose(&decision.uav_delta)?;
        let moves = check_move(&self.topo, &self.state.pose, &pose);
        if !moves.is_empty() {
            return Err(Error::Geometry(format!("projected pose infeasible: {moves:?}")));
        }
        let decision = self.prepare(decision)?;
        let scheduled = (0..decision.num_users()).filter(|&u| decision.assignment.row(u).iter().any(|&a| a)).count();
        let draw = self.draw(&pose)?;
        let out = self.evaluate(&decision, &draw)?;
        let slot = self.state.slot;
        let (users, n_sc) = (self.cfg.num_users, self.cfg.num_subcarriers);
        let gains = Array2::from_shape_fn((users, n_sc), |(u, n)| out.channels.gain(u, n));
        self.state.pose = pose;
        self.state.aoi = out.aoi;
        self.state.slot += 1;
        let traffic = self.cfg.traffic();
        generate_traffic(&mut self.state.aoi, &traffic, self.state.slot, &mut self.arrivals);
        Ok(StepRecord {
            slot,
            ages: out.ages,
            rates: out.rates,
            positions: self.state.pose.positions.clone(),
            reward: out.reward,
            feasible: true,
            delivered: out.delivered,
            scheduled,
            gains,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::profiles::desk_scenario;
    use crate::phys::UavPose;

    fn env() -> Env {
        let mut e = Env::new(desk_scenario(), 3).unwrap();
        e.reset(7, 0).unwrap();
        e
    }

    #[test]
    fn single_uav_places_without_rejection() {
        let mut cfg = desk_scenario();
        cfg.num_uavs = 1;
        let mut e = Env::new(cfg, 1).unwrap();
        e.reset(1, 0).unwrap();
        assert_eq!(e.state().pose.num_uavs(), 1);
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = Env::new(desk_scenario(), 5).unwrap();
        let mut b = Env::new(desk_scenario(), 5).unwrap();
        assert_eq!(a.topology(), b.topology());
        assert_eq!(a.reset(9, 2).unwrap(), b.reset(9, 2).unwrap());
    }

    #[test]
    fn initial_poses_are_feasible() {
        let mut e = Env::new(desk_scenario(), 1).unwrap();
        for ep in 0..1000 {
            e.reset(11, ep).unwrap();
            assert!(e.state().pose.violations(e.topology()).is_empty());
            assert!(e.state().aoi.backlog.iter().all(|&b| b == 0));
            assert!(e.state().aoi.age_slots.iter().all(|&a| a == 1));
        }
    }

    #[test]
    fn impossible_separation_fails_placement() {
        let mut cfg = desk_scenario();
        cfg.num_uavs = 4;
        cfg.min_uav_separation = 2000.0;
        let mut e = Env::new(cfg, 1).unwrap();
        assert!(matches!(e.reset(1, 0), Err(Error::Placement { .. })));
    }

    #[test]
    fn null_action_ages_everyone() {
        let mut e = env();
        let before = e.state().clone();
        let delta = e.config().slot_duration;
        let rec = e.step(e.idle_decision()).unwrap();
        assert_eq!(rec.positions, before.pose.positions);
        let max_before = before.aoi.ages(delta).into_iter().fold(0.0, f64::max);
        assert!((rec.reward + (max_before + delta)).abs() < 1e-12);
        assert!(rec.rates.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn step_is_deterministic() {
        let run = || {
            let mut e = env();
            let mut out = Vec::new();
            for k in 0..30 {
                let mut d = e.idle_decision();
                let u = k % e.config().num_users;
                d.assignment[[u, 0]] = true;
                d.power[[u, 0]] = e.limits().power_mask[0];
                d.uav_delta = vec![[0.5, -0.3]; e.config().num_uavs];
                out.push(e.step(d).unwrap());
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn features_are_bounded() {
        let mut e = env();
        for _ in 0..e.config().slots_per_episode {
            let f = e.features();
            assert_eq!(f.len(), 2 * e.config().num_uavs + 2 * e.config().num_users);
            assert!(f.iter().all(|x| x.is_finite() && (-1.0..=1.0).contains(x)));
            e.step(e.idle_decision()).unwrap();
        }
        assert!(e.done());
    }

    #[test]
    fn empty_queues_are_not_scheduled() {
        let mut e = env();
        let mut d = e.idle_decision();
        d.assignment[[0, 0]] = true;
        d.power[[0, 0]] = 1e-3;
        let rec = e.step(d).unwrap();
        assert_eq!(rec.scheduled, 0);
    }

    #[test]
    fn infeasible_decision_is_rejected() {
        let mut e = env();
        e.state.aoi.backlog = vec![1; e.config().num_users];
        let mut d = e.idle_decision();
        for u in 0..3 {
            d.assignment[[u, 0]] = true;
        }
        assert!(matches!(e.step(d), Err(Error::Infeasible(_))));
    }

    #[test]
    fn evaluate_does_not_touch_state() {
        let mut e = env();
        let pose = UavPose { ..e.state().pose.clone() };
        let draw = e.draw(&pose).unwrap();
        let before = e.state().clone();
        let d = e.prepare(e.idle_decision()).unwrap();
        let a = e.evaluate(&d, &draw).unwrap();
        let b = e.evaluate(&d, &draw).unwrap();
        assert_eq!(a.reward, b.reward);
        assert_eq!(&before, e.state());
    }
}
