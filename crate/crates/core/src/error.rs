use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("event duration {duration} s exceeds round length {round_length} s")]
    EventTooLong { duration: f64, round_length: f64 },

    #[error("misaligned stream bundle for vehicle {vehicle_id}: {reason}")]
    MisalignedBundle { vehicle_id: u32, reason: String },

    #[error("interval [{t_start}, {t_end}] of point {point_id} contains no frames")]
    EmptyInterval {
        point_id: u32,
        t_start: f64,
        t_end: f64,
    },

    #[error("fragment of point {found} passed while combining point {expected}")]
    ForeignFragment { expected: u32, found: u32 },

    #[error("cannot aggregate zero rounds")]
    NoRounds,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_owned(),
            reason: reason.into(),
        }
    }
}
