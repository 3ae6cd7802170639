use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid bandwidth: requested {requested} graph frequencies but the graph has {available} vertices")]
    InvalidBandwidth { requested: usize, available: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("null density vanishes at p = 1, prior is not identifiable")]
    Identifiability,

    #[error("degenerate mixture: null prior is 1 (gamma = {gamma})")]
    DegenerateMixture { gamma: f64 },

    #[error("non-finite {quantity} at sample {index}")]
    Numerical {
        index: usize,
        quantity: &'static str,
    },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("model selection failed: no grid cell produced a finite fit")]
    Selection,

    #[error("{source_name}, line {line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent user input, as
    /// opposed to runtime or numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::InvalidBandwidth { .. }
                | Error::Domain(_)
                | Error::Identifiability
                | Error::Parse { .. }
        )
    }

    pub(crate) fn parse(
        source_name: impl Into<String>,
        line: u64,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}
