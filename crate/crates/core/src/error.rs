use thiserror::Error;

/// Errors produced by the models, the simulator and the command front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("distance {distance_km} km is outside the deployment disk [0, {max_km}] km")]
    OutOfRange { distance_km: f64, max_km: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("infeasible plan for SF{sf}: {reason}")]
    Infeasible { sf: u8, reason: String },

    #[error("insufficient statistics in ring {ring}: {reason}")]
    Statistics { ring: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Csv(_) | Error::OutOfRange { .. } => 1,
            Error::Numerical(_)
            | Error::Singularity(_)
            | Error::Model(_)
            | Error::Statistics { .. } => 2,
            Error::Infeasible { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
