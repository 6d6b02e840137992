use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the modelling and selection pipeline.
///
/// Variants are split into input problems (bad shapes, bad configuration)
/// and numerical failures so callers can map them to distinct exit codes.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("degenerate bootstrap reference: coordinate {coordinate} has no sampling variability")]
    DegenerateReference { coordinate: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures that come from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::DegenerateReference { .. } | Error::Numerical(_)
        )
    }
}
