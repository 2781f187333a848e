//! Error type shared by every solver and I/O routine in the crate.

/// Crate-wide error enumeration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes of the supplied buffers are inconsistent with the operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A scalar or structural parameter is out of its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The normal equations could not be factorized even after ridge escalation.
    #[error("singular system: condition estimate {cond_estimate:.3e}")]
    Singular { cond_estimate: f64 },

    /// An oracle refused a problem large enough to exhaust memory.
    #[error("oracle size guard: {0}")]
    SizeGuard(String),

    /// A weight manifest or its blob failed validation.
    #[error("weight manifest: {0}")]
    Manifest(String),

    /// A solver error annotated with the unfolding stage that raised it.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Text or JSON input could not be parsed.
    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// Wraps an error with the unfolding stage index (1-based) it occurred in.
    pub fn at_stage(self, stage: usize) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
