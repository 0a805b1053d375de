use thiserror::Error;

/// Errors produced by the wavegraph toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// The graph description is structurally inconsistent (dangling or
    /// doubly-used ports, unknown references, empty graph).
    #[error("structural error: {0}")]
    Structure(String),

    /// A value violates a physical or numerical invariant (non-unitary
    /// scatterer, non-positive length, malformed input data).
    #[error("validation error: {0}")]
    Validation(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// `eigenmode_at` was called at a wavenumber where `I - U_B(k)` is not singular.
    #[error("k = {k} is not a spectral point (smallest singular value {sigma_min:.3e})")]
    NotSpectralPoint { k: f64, sigma_min: f64 },

    /// The spectral scan could not resolve all crossings.
    #[error("resolution error: {message} (suggested grid step {suggested_dk:.3e} 1/um)")]
    Resolution { message: String, suggested_dk: f64 },

    /// A resonance pole ended up on or above the real axis.
    #[error("unitarity violation: {0}")]
    UnitarityViolation(String),

    /// Periodic-orbit enumeration exceeded its path budget.
    #[error("orbit enumeration exceeded {budget} partial paths; reduce the length cutoff (currently {cutoff_um} um)")]
    OrbitBudget { budget: usize, cutoff_um: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
