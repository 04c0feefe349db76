use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure mode of the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // process
    #[error("alphabet must contain at least two symbols")]
    EmptyAlphabet,
    #[error("row {row} is not a probability vector (sum {sum}, min entry {min})")]
    NonStochastic { row: usize, sum: f64, min: f64 },
    #[error("transition table is not square or does not match the alphabet ({0})")]
    DimensionMismatch(String),
    #[error("transition table is reducible")]
    Reducible,
    #[error("transition table is periodic")]
    Periodic,
    #[error("symbol {symbol} outside alphabet of size {q}")]
    SymbolOutOfRange { symbol: usize, q: usize },
    #[error("word must be non-empty")]
    EmptyWord,
    #[error("mixing gap must be at least 1")]
    GapNonPositive,

    // targets
    #[error("target set must contain at least one word")]
    EmptyTarget,
    #[error("Hamming fraction {0} outside [0, 1)")]
    InvalidFraction(f64),
    #[error("expansion of {size} words exceeds cap {cap}")]
    ExpansionTooLarge { size: u128, cap: u128 },
    #[error("rank mismatch: {left} vs {right}")]
    RankMismatch { left: usize, right: usize },

    // exact / mc
    #[error("horizon must be at least 1")]
    HorizonNonPositive,
    #[error("target set has zero measure")]
    ZeroMeasureSet,
    #[error("enumeration of {size} weighted words exceeds cap {cap}")]
    EnumerationTooLarge { size: u128, cap: u128 },
    #[error("state space of {states} states exceeds dense-solve cap {cap}")]
    StateSpaceTooLarge { states: usize, cap: usize },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("rejection budget of {budget} draws exhausted (acceptance too rare)")]
    RejectionBudgetExceeded { budget: u64 },
    #[error("tail horizons differ: {left} vs {right}")]
    HorizonMismatch { left: usize, right: usize },
    #[error("sample batch is empty")]
    EmptyBatch,

    // scaling
    #[error("tail horizon {available} too short (need {needed})")]
    HorizonTooShort { needed: usize, available: usize },
    #[error("horizon search exceeded hard cap of {cap} steps")]
    HorizonCapExceeded { cap: usize },
    #[error("tail vanishes at the selected scale")]
    ZeroTail,
    #[error("certificate is not in the quantitative regime")]
    NotQuantitative,
    #[error("expected a {expected} tail")]
    WrongTailKind { expected: &'static str },

    // rarity
    #[error("cardinality rate {rate} is not below entropy {entropy}")]
    RateExceedsEntropy { rate: f64, entropy: f64 },
    #[error("entropy must be positive")]
    NonPositiveEntropy,
    #[error("no crossing of e^h on (0,1); D0 is unconstrained")]
    NoCrossing,

    // limitlaw
    #[error("evaluation grid is empty")]
    GridEmpty,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("laws do not share lambda and measure")]
    LawMismatch,

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for failures caused by a size or budget cap rather than bad input.
    pub fn is_resource_cap(&self) -> bool {
        matches!(
            self,
            Error::ExpansionTooLarge { .. }
                | Error::EnumerationTooLarge { .. }
                | Error::StateSpaceTooLarge { .. }
                | Error::RejectionBudgetExceeded { .. }
                | Error::HorizonCapExceeded { .. }
        )
    }
}
