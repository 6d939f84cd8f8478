use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown phoneme `{0}`")]
    UnknownPhoneme(String),

    #[error("index {index} out of range (limit {limit})")]
    InvalidIndex { index: usize, limit: usize },

    #[error("input is not a normalized distribution (log-sum-exp = {0})")]
    NotADistribution(f64),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("lexicon is empty")]
    EmptyLexicon,

    #[error("out-of-vocabulary word `{0}`")]
    OovWord(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sequence too short: {len} frames, window {window}")]
    TooShort { len: usize, window: usize },

    #[error("numerical error in {0}")]
    Numerical(String),

    #[error("no feasible CTC alignment: {frames} frames for {required} required")]
    InfeasibleAlignment { frames: usize, required: usize },

    #[error("beam search produced no complete hypothesis")]
    EmptyBeam,

    #[error("rescoring failed after {} candidates: {reason}", partial.len())]
    RescoreFailed {
        reason: String,
        partial: Vec<crate::decode::Hypothesis>,
    },

    #[error("candidate selection failed: {0}")]
    SelectFailed(String),

    #[error("corpus has zero reference tokens")]
    DegenerateCorpus,

    #[error("scoring service unavailable: {0}")]
    Unavailable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("merge output rejected, starts with blocked phrase `{0}`")]
    PreambleRejected(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
