use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty observation sequence")]
    EmptySequence,

    #[error("sequence of length {len} is too short (need at least {min})")]
    SequenceTooShort { len: usize, min: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("audio file not found: {0}")]
    MissingAudio(PathBuf),

    #[error("unknown condition label `{label}` (known: {known})")]
    UnknownLabel { label: String, known: String },

    #[error("duplicate utterance key: speaker {speaker}, sentence {sentence}, condition {condition}, repetition {repetition}")]
    DuplicateUtterance {
        speaker: String,
        sentence: u32,
        condition: String,
        repetition: u32,
    },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("state {state} received no responsibility mass; the initial model is degenerate for this data")]
    DegenerateState { state: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("condition `{0}` has no training utterances")]
    NoTrainingData(String),

    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
