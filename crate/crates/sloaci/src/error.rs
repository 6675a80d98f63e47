//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Error conditions surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// An operation needed more observations than were available.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A least-squares design matrix was singular (or numerically so).
    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    /// A numerical search failed; the evaluated `(argument, objective)`
    /// pairs are attached for diagnosis.
    #[error("optimization failed: {message} (evaluated {} points)", grid.len())]
    Optimization {
        message: String,
        grid: Vec<(f64, f64)>,
    },

    /// A configuration file or flag set was invalid or self-contradictory.
    #[error("configuration error: {0}")]
    Config(String),

    /// A non-finite value appeared where a finite one is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A replication aborted; wraps the stage and underlying cause.
    #[error("replication {rep} failed at stage {stage}: {source}")]
    Replication {
        rep: u32,
        stage: u32,
        #[source]
        source: Box<Error>,
    },

    /// Forwarded I/O failure (output files, config reads).
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps `self` with replication context.
    pub fn in_replication(self, rep: u32, stage: u32) -> Error {
        Error::Replication {
            rep,
            stage,
            source: Box::new(self),
        }
    }
}
