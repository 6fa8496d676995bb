use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure talking to an external service.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct TransportError {
    /// Which call failed, e.g. `segment-everything` or `chat`.
    pub stage: String,
    pub message: String,
}

impl TransportError {
    pub fn new(stage: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            message: message.into(),
        }
    }

    pub fn with_stage(mut self, stage: impl Into<String>) -> Self {
        self.stage = stage.into();
        self
    }
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("empty mask")]
    EmptyMask,

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("image decode failed: {0}")]
    Image(String),

    #[error("transport error: {0}")]
    Transport(#[from] TransportError),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("query cannot be matched: {0}")]
    UnmatchableQuery(String),

    #[error("ambiguous query: both boxes map to {0}")]
    AmbiguousQuery(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("prompt exceeds context limit: {estimated} > {limit} tokens ({parts})")]
    ContextOverflow {
        estimated: usize,
        limit: usize,
        parts: String,
    },

    #[error("empty story")]
    EmptyStory,

    #[error("answer does not follow the template")]
    NoTemplate { raw: String },

    #[error("unknown label {phrase:?}")]
    UnknownLabel { phrase: String, raw: String },

    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),

    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("search space too large: {size} selections exceeds cap {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by an external service rather than by the data.
    pub fn is_service_error(&self) -> bool {
        matches!(self, Error::Transport(_) | Error::Protocol(_))
    }
}
