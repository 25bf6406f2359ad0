use thiserror::Error;

/// Errors across the estimation and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("rank deficient design (effective rank {effective_rank})")]
    RankDeficient { effective_rank: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("instrument value {0} is not a point of the counterfactual grid")]
    UnknownGridPoint(f64),

    #[error("degenerate comparison: treatment shares are equal at the two instrument values")]
    DegenerateComparison,

    #[error("model with K={k}, J={j}, L={l} is not identified")]
    NotIdentified { k: usize, j: usize, l: usize },

    #[error("first-stage projection of the treatment is zero for instrument {instrument}")]
    DivisionByZeroFirstStage { instrument: usize },

    #[error("unknown instrument name: {0}")]
    UnknownInstrument(String),

    #[error("anchor outcome has equal component effects; the three-step system is singular")]
    DegenerateAnchor,

    #[error("quadratic-form statistic is negative beyond tolerance: {0}")]
    NegativeStatistic(f64),

    #[error("instrument {index}: {source}")]
    Instrument {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tags an error with the instrument index it arose from.
    pub fn for_instrument(self, index: usize) -> Self {
        Error::Instrument {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
