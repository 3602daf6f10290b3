//! Packet arrivals, age-of-information bookkeeping and the age objective.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficParams {
    /// Expected packets per slot per user.
    pub arrival_rate: f64,
    /// Bits per packet.
    pub packet_size: f64,
}

impl TrafficParams {
    pub fn validate(&self) -> Result<()> {
        if self.arrival_rate > 0.0 && self.arrival_rate.is_finite() && self.packet_size > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("arrival rate and packet size must be positive".into()))
        }
    }
}

/// Per-user age and queue state.
///
/// Ages are kept as whole slots so that deliveries reset them exactly; the
/// age in seconds is `slots * delta`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AoiState {
    pub age_slots: Vec<u64>,
    /// Queued bits.
    pub backlog: Vec<u64>,
    /// Generation slot of the oldest undelivered packet.
    pub generation_slot: Vec<Option<u64>>,
    /// Whether anything arrived in the latest call to [`generate_traffic`].
    pub arrived: Vec<bool>,
}

impl AoiState {
    /// Every user starts one slot old with an empty queue.
    pub fn new(num_users: usize) -> Self {
        Self {
            age_slots: vec![1; num_users],
            backlog: vec![0; num_users],
            generation_slot: vec![None; num_users],
            arrived: vec![false; num_users],
        }
    }

    pub fn num_users(&self) -> usize {
        self.age_slots.len()
    }

    pub fn ages(&self, delta: f64) -> Vec<f64> {
        self.age_slots.iter().map(|&a| a as f64 * delta).collect()
    }
}

/// Adds `Poisson(arrival_rate)` packets per user, stamped with `slot`.
pub fn generate_traffic<R: Rng + ?Sized>(state: &mut AoiState, params: &TrafficParams, slot: u64, rng: &mut R) {
    let poisson = Poisson::new(params.arrival_rate).expect("validated arrival rate");
    let packet = params.packet_size.round() as u64;
    for u in 0..state.num_users() {
        let count = poisson.sample(rng) as u64;
        state.arrived[u] = count > 0;
        if count > 0 {
            if state.backlog[u] == 0 {
                state.generation_slot[u] = Some(slot);
            }
            state.backlog[u] += count * packet;
        }
    }
}

/// Advances every age by one slot, or resets it for users whose whole queue
/// fits into this slot at the given rate. Returns which users delivered.
pub fn step_aoi(state: &mut AoiState, rates: &[f64], slot: u64, delta: f64) -> Vec<bool> {
    assert_eq!(rates.len(), state.num_users());
    let mut delivered = vec![false; rates.len()];
    for (u, &r) in rates.iter().enumerate() {
        debug_assert!(r >= 0.0);
        let backlog = state.backlog[u];
        match state.generation_slot[u] {
            Some(k0) if backlog > 0 && r > 0.0 && backlog as f64 <= r * delta => {
                state.age_slots[u] = slot - k0 + 1;
                state.backlog[u] = 0;
                state.generation_slot[u] = None;
                delivered[u] = true;
            }
            _ => state.age_slots[u] += 1,
        }
    }
    delivered
}

/// Worst per-user time-average age over a trace of per-slot ages.
pub fn objective_aaoi(trace: &[Vec<f64>]) -> f64 {
    assert!(!trace.is_empty(), "empty age trace");
    let users = trace[0].len();
    let k = trace.len() as f64;
    (0..users)
        .map(|u| trace.iter().map(|row| row[u]).sum::<f64>() / k)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// `-max_u age_u`
    #[default]
    MaxAge,
    /// `-sum_u age_u`
    SumAge,
}

pub fn step_reward(ages: &[f64], kind: RewardKind) -> f64 {
    match kind {
        RewardKind::MaxAge => -ages.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        RewardKind::SumAge => -ages.iter().sum::<f64>(),
    }
}
