use std::io;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {0}: expected 3 tab-separated fields")]
    MalformedLine(usize),
    #[error("line {line}: unknown relation `{token}`")]
    UnknownRelation { line: usize, token: String },
    #[error("split ratios must be non-negative, have a positive train share and sum to 1 (got {0:?})")]
    BadRatios((f64, f64, f64)),
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("latent index {k} out of range for K = {num_latents}")]
    LatentOutOfRange { k: usize, num_latents: usize },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("loss node has shape {0:?}, expected a scalar")]
    NonScalarLoss(Vec<usize>),
    #[error("invalid backbone config: {0}")]
    BadConfig(String),
    #[error("invalid target sequence: {0}")]
    BadTarget(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("output set {set} has {targets} targets but only {num_latents} latent values")]
    InfeasibleK {
        set: String,
        targets: usize,
        num_latents: usize,
    },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("no reasoning paths to score")]
    NoPaths,
    #[error("answer must contain at least one token")]
    EmptyAnswer,
    #[error("need at least {needed} candidate answers, got {got}")]
    TooFewAnswers { needed: usize, got: usize },
    #[error("n-gram unions are empty for every n")]
    AllUnionsEmpty,
    #[error("BLEU needs non-empty hypothesis and reference")]
    EmptySequence,
    #[error("div_bleu needs at least 2 sequences, got {0}")]
    TooFewSequences(usize),
    #[error("invalid training config: {0}")]
    BadTrainConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
