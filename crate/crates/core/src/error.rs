use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time grid must hold at least 2 strictly increasing instants: {0}")]
    InvalidGrid(String),

    #[error("sample count {samples} does not match grid length {grid}")]
    LengthMismatch { samples: usize, grid: usize },

    #[error("noise variance must be non-negative, got {0}")]
    NegativeVariance(f64),

    #[error("template envelope is numerically zero on the grid (energy {energy:e})")]
    DegenerateEnvelope { energy: f64 },

    #[error("periodogram has no peak above the numerical floor")]
    NoCandidate,

    #[error("neighborhoods cover every frequency bin; no bins left to estimate noise power")]
    EmptyComplement,

    #[error("pseudo-true bracket [{lo}, {hi}] does not enclose a sign change (psi(lo)={psi_lo:e}, psi(hi)={psi_hi:e})")]
    BracketFailure {
        lo: f64,
        hi: f64,
        psi_lo: f64,
        psi_hi: f64,
    },

    #[error("Fisher information is singular or ill-conditioned (condition number {condition:e})")]
    SingularFisher { condition: f64 },
}
