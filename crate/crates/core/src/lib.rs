pub mod agents;
pub mod aoi;
pub mod baselines;
pub mod env;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod noma;
pub mod oracle;
pub mod phys;
pub mod rng;
pub mod scenario;

pub use agents::train::{AgentBundle, AgentConfig, EpisodeMetrics};
pub use baselines::PolicyKind;
pub use env::{Env, StepRecord};
pub use error::{Error, Result};
pub use experiment::{Checkpoint, ExperimentConfig, Profile};
pub use noma::{LinkDecision, LinkLimits};
pub use phys::{ChannelRealization, NetworkTopology, ReflectionConfig, UavPose};
pub use scenario::ScenarioConfig;
