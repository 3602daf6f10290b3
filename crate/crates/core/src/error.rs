use thiserror::Error;

use crate::noma::ViolationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("user {user} is not assigned to sub-carrier {subcarrier}")]
    Unassigned { user: usize, subcarrier: usize },

    #[error("could not place {uavs} UAVs with the required separation after {tries} attempts")]
    Placement { uavs: usize, tries: usize },

    #[error("infeasible decision: {0}")]
    Infeasible(ViolationReport),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged in episode {episode}: non-finite {what} loss")]
    Diverged { episode: usize, what: &'static str },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::NonFinite(_) => "non_finite",
            Error::Dimension(_) => "dimension",
            Error::Geometry(_) => "geometry",
            Error::Unassigned { .. } => "unassigned",
            Error::Placement { .. } => "placement",
            Error::Infeasible(_) => "infeasible",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Diverged { .. } => "diverged",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Toml(_) => "toml",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
