//! Built-in parameter profiles.

use crate::agents::train::AgentConfig;
use crate::agents::{DdqnConfig, PpoConfig};
use crate::aoi::RewardKind;
use crate::noma::InterferenceConvention;
use crate::scenario::{PhaseMode, ScenarioConfig};

/// Small network used for tests and the acceptance campaign.
pub fn desk_scenario() -> ScenarioConfig {
    ScenarioConfig {
        num_users: 6,
        arena_size: 400.0,
        cu_position: [0.0, 0.0, 10.0],
        num_antennas: 2,
        num_uavs: 2,
        uav_altitude: 50.0,
        num_elements: 16,
        element_spacing: 0.5,
        coverage_radius: 400.0,
        min_uav_separation: 8.0,
        max_speed: 10.0,
        slot_duration: 0.1,
        carrier_frequency: 2e9,
        ref_path_gain_db: -30.0,
        pathloss_exp_nlos: 3.0,
        pathloss_exp_los: 2.2,
        single_pathloss_exp: None,
        rician_k: 3.0,
        noise_power: 1e-14,
        bandwidth: 200e3,
        num_subcarriers: 2,
        cluster_size: 2,
        power_mask_dbm: 5.0,
        max_power_dbm: 20.0,
        interference: InterferenceConvention::DecodedAfter,
        arrival_rate: 0.5,
        packet_size: 10_000.0,
        slots_per_episode: 120,
        reward: RewardKind::MaxAge,
        candidate_width: 6,
        phase_mode: PhaseMode::Linear,
        min_amplitude: 0.01,
    }
}

/// Full-size network.
pub fn paper_scenario() -> ScenarioConfig {
    ScenarioConfig {
        num_users: 20,
        num_elements: 100,
        num_subcarriers: 4,
        slots_per_episode: 600,
        ..desk_scenario()
    }
}

/// Learner settings sized for a single CPU.
pub fn desk_agent() -> AgentConfig {
    AgentConfig {
        episodes: 300,
        eval_episodes: 20,
        ddqn: DdqnConfig {
            hidden: vec![400, 30],
            gamma: 0.8,
            tau: 0.01,
            lr: 1e-4,
            batch_size: 128,
            memory_capacity: 10_000,
            warmup: 500,
            train_interval: 4,
            grad_clip: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.3,
        },
        ppo: PpoConfig {
            hidden: vec![400, 30],
            clip: 0.2,
            actor_lr: 1e-5,
            critic_lr: 1e-4,
            gamma: 0.8,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch: 60,
            grad_clip: 1.0,
            init_log_std: -0.5,
            init_output_scale: 0.01,
        },
    }
}

/// Reference-length training run.
pub fn paper_agent() -> AgentConfig {
    AgentConfig { episodes: 4000, ..desk_agent() }
}
