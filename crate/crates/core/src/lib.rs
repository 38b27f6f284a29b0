//! Discretized incidence-geometry laboratory.
//!
//! Everything lives on dyadic grids in `[0,1]^n` (n = 1, 2, 3). Cell sets,
//! tube shadings, covering numbers and measures are exact (integer / rational
//! arithmetic); inequality checkers compare an exactly measured left-hand
//! side against closed-form right-hand sides at a stated slack. The
//! `wavepacket` module is the one floating-point corner: a quadrature
//! extension operator on the paraboloid with a wave-packet decomposition.

pub mod branching;
pub mod dyadic;
pub mod exponents;
pub mod generators;
pub mod incidence;
pub mod oracle;
pub mod rat;
pub mod refine;
pub mod report;
pub mod seed;
pub mod setclass;
pub mod tubes;
pub mod wavepacket;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition not met: {0}")]
    Precondition(String),
    #[error("scale mismatch: {0}")]
    ScaleMismatch(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("probabilistic construction failed after {attempts} attempts: {detail}")]
    Probabilistic { attempts: u32, detail: String },
    #[error("certificate failure (member {member}, block {block}, item {item}): {detail}")]
    Certificate {
        member: usize,
        block: usize,
        item: u8,
        detail: String,
    },
    #[error("internal error: {0}")]
    Internal(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand used by several modules when rejecting bad arguments.
pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
