//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a precondition (wrong size, non-finite value, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A parameter combination is self-contradictory (e.g. channel longer
    /// than the zero padding, or an empty stopband grid).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The LP solver proved the problem infeasible or unbounded.
    #[error("no solution: {0}")]
    Solver(String),

    /// Spectral factorization failed (negative spectrum, unpaired roots, or
    /// a round-trip residual beyond tolerance).
    #[error("spectral factorization failed: {0}")]
    Factorization(String),

    /// The zero-forcing receiver hit a spectral null at a used bin.
    #[error("spectral null: |F*H| = {magnitude:.3e} at carrier {carrier} is below 1e-12")]
    SpectralNull { carrier: usize, magnitude: f64 },

    /// A Monte Carlo experiment could not make progress.
    #[error("experiment failed: {0}")]
    Experiment(String),

    /// An iterative numerical routine did not converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
