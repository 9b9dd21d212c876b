use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("parse error at offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// The location invariant stopped holding during a continuous evolution.
    #[error("invariant of location `{location}` violated at t = {time}")]
    InvariantExit { location: String, time: f64 },

    #[error("guard of edge {edge} is not enabled")]
    GuardNotEnabled { edge: usize },

    /// The post-state of a discrete transition is not admissible in the target location.
    #[error("reset of edge {edge} leads outside the target invariant")]
    TargetNotAdmissible { edge: usize },

    #[error("state is not admissible in location `{0}`")]
    NotAdmissible(String),

    /// A trajectory never came back to a section within the horizon.
    #[error("no return to the section: {0}")]
    NoReturn(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
