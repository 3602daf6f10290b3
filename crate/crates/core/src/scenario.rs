//! Scenario parameters: everything the environment needs to build a network,
//! draw channels and score a slot.

use serde::{Deserialize, Serialize};

use crate::aoi::{RewardKind, TrafficParams};
use crate::error::{Error, Result};
use crate::noma::{InterferenceConvention, LinkLimits, Receiver};
use crate::phys::{ChannelParams, NetworkTopology};

/// How reflection phases are parameterized by the continuous action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Two scalars per UAV: `theta_l = pi * phi0 + pi * phi1 * l`.
    #[default]
    Linear,
    /// One scalar per element.
    PerElement,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_users: usize,
    /// Users are placed uniformly in the square `[-s/2, s/2]^2`.
    pub arena_size: f64,
    pub cu_position: [f64; 3],
    pub num_antennas: usize,
    pub num_uavs: usize,
    pub uav_altitude: f64,
    pub num_elements: usize,
    pub element_spacing: f64,
    pub coverage_radius: f64,
    pub min_uav_separation: f64,
    pub max_speed: f64,
    pub slot_duration: f64,

    pub carrier_frequency: f64,
    pub ref_path_gain_db: f64,
    pub pathloss_exp_nlos: f64,
    pub pathloss_exp_los: f64,
    /// Forces one exponent on every link when set.
    pub single_pathloss_exp: Option<f64>,
    pub rician_k: f64,
    pub noise_power: f64,
    pub bandwidth: f64,

    pub num_subcarriers: usize,
    pub cluster_size: usize,
    pub power_mask_dbm: f64,
    pub max_power_dbm: f64,
    pub interference: InterferenceConvention,

    pub arrival_rate: f64,
    pub packet_size: f64,

    pub slots_per_episode: usize,
    pub reward: RewardKind,
    /// Users ranked by age that the discrete action may pick from.
    pub candidate_width: usize,
    pub phase_mode: PhaseMode,
    /// Smallest reflection amplitude a continuous action can produce.
    pub min_amplitude: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_subcarriers == 0 || self.cluster_size == 0 {
            return bad("num_subcarriers and cluster_size must be positive");
        }
        if self.slots_per_episode == 0 {
            return bad("slots_per_episode must be positive");
        }
        if self.candidate_width < self.cluster_size {
            return bad("candidate_width must be at least cluster_size");
        }
        if !(self.arena_size > 0.0) {
            return bad("arena_size must be positive");
        }
        if !(self.min_amplitude > 0.0 && self.min_amplitude <= 1.0) {
            return bad("min_amplitude must lie in (0, 1]");
        }
        if !(self.power_mask_dbm.is_finite() && self.max_power_dbm.is_finite()) {
            return bad("power limits must be finite");
        }
        self.channel().validate()?;
        self.traffic().validate()?;
        let probe = NetworkTopology { user_positions: vec![[0.0, 0.0, 0.0]], ..self.topology(vec![]) };
        probe.validate()?;
        if self.num_users == 0 {
            return bad("num_users must be positive");
        }
        Ok(())
    }

    pub fn topology(&self, user_positions: Vec<[f64; 3]>) -> NetworkTopology {
        NetworkTopology {
            user_positions,
            cu_position: self.cu_position,
            num_antennas: self.num_antennas,
            num_uavs: self.num_uavs,
            uav_altitude: self.uav_altitude,
            num_elements: self.num_elements,
            element_spacing: self.element_spacing,
            coverage_radius: self.coverage_radius,
            min_uav_separation: self.min_uav_separation,
            max_speed: self.max_speed,
            slot_duration: self.slot_duration,
        }
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            ref_path_gain: 10f64.powf(self.ref_path_gain_db / 10.0),
            pathloss_exp_nlos: self.pathloss_exp_nlos,
            pathloss_exp_los: self.pathloss_exp_los,
            single_exponent: self.single_pathloss_exp,
            rician_k: vec![self.rician_k; self.num_subcarriers],
            noise_power: self.noise_power,
            bandwidth: self.bandwidth,
            carrier_frequency: self.carrier_frequency,
        }
    }

    pub fn limits(&self) -> LinkLimits {
        LinkLimits {
            cluster_size: self.cluster_size,
            power_mask: vec![dbm_to_watts(self.power_mask_dbm); self.num_subcarriers],
            max_power: dbm_to_watts(self.max_power_dbm),
        }
    }

    pub fn receiver(&self) -> Receiver {
        Receiver { noise_power: self.noise_power, bandwidth: self.bandwidth, convention: self.interference }
    }

    pub fn traffic(&self) -> TrafficParams {
        TrafficParams { arrival_rate: self.arrival_rate, packet_size: self.packet_size }
    }

    /// Size of the candidate pool actually available, `min(A, U)`.
    pub fn effective_candidates(&self) -> usize {
        self.candidate_width.min(self.num_users)
    }

    pub fn max_step(&self) -> f64 {
        self.max_speed * self.slot_duration
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-12);
        assert!((dbm_to_watts(5.0) - 3.1622776601683795e-3).abs() < 1e-15);
    }
}
