use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Structural parse failure. `at` names the offending element, e.g.
    /// `data[0].paragraphs[3].qas[1].answers`.
    #[error("{path}: malformed input at `{at}`: {message}")]
    Parse { path: PathBuf, at: String, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("empty text for context `{0}`")]
    EmptyText(String),

    #[error("no trainable pairs for context `{0}`")]
    NoTrainablePairs(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unknown document `{0}`")]
    UnknownDocument(String),

    #[error("empty question")]
    EmptyQuestion,

    #[error("no gold answers")]
    NoGoldAnswers,

    #[error("answer span {start}..{end} lies outside window {window_start}..{window_end}")]
    SpanOutsideWindow {
        start: usize,
        end: usize,
        window_start: usize,
        window_end: usize,
    },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("invalid index file: {0}")]
    BadIndex(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("predictions do not match questions: {0}")]
    PredictionMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
