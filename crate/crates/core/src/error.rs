//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("price {price} outside admissible band [{lo}, {hi}]")]
    PriceOutOfBand { price: f64, lo: f64, hi: f64 },

    #[error("solver failed to converge: {0}")]
    NoConvergence(String),

    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate equilibrium: {0}")]
    DegenerateEquilibrium(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
