use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("weights sum to {sum}, outside the 1e-9 renormalization band")]
    NotOnSimplex { sum: f64 },

    #[error("invalid weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("market weight of asset {asset} is zero on the portfolio support")]
    ZeroMarketWeight { asset: usize },

    #[error("relative entropy is infinite at t={t}: portfolio holds asset {asset} with zero market weight")]
    InfiniteEntropy { t: usize, asset: usize },

    #[error("free energy is not finite at t={t}")]
    NonFiniteFreeEnergy { t: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("overlapping or malformed sector map: {0}")]
    SectorMap(String),

    #[error("weight function is not integrable: {0}")]
    NonIntegrable(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("identity check failed: {0}")]
    IdentityCheck(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::IdentityCheck(_) => 3,
            _ => 2,
        }
    }
}
