//! Learners: double Q-learning for sub-carrier assignment and clipped policy
//! optimization for the continuous controls, plus the joint training loop.

pub mod ddqn;
pub mod ppo;
pub mod replay;
pub mod train;

pub use ddqn::{DdqnAgent, DdqnConfig, Transition};
pub use ppo::{PpoAgent, PpoConfig, PpoSample, Rollout};
pub use replay::Replay;
pub use train::{act, evaluate, random_policy, train, AgentBundle, AgentConfig, EpisodeMetrics, EvalOutcome, Mode, TrainOutcome};
