//! Geometry, mobility and channel generation.

pub mod channel;
pub mod topology;

pub use channel::{
    compose_effective_channel, expected_snr, sample_direct_channel, sample_ue_uav_channel, steering_vector,
    uav_cu_channel, ChannelParams, ChannelRealization, ReflectionConfig,
};
pub use topology::{check_move, project_uav_move, MobilityViolation, NetworkTopology, UavPose, Vec3};
