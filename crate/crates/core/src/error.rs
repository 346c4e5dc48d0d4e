use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {context} at batch index {index}")]
    NonFinite { context: String, index: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("grid has no zero crossing (empty surface)")]
    EmptySurface,

    #[error("ground truth of unlabeled sample {0} is not accessible to training code")]
    HiddenGroundTruth(usize),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{phase} epoch {epoch}: {source}")]
    Phase {
        phase: String,
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_phase(self, phase: &str, epoch: usize) -> Error {
        match self {
            e @ Error::Phase { .. } => e,
            other => Error::Phase {
                phase: phase.to_owned(),
                epoch,
                source: Box::new(other),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
