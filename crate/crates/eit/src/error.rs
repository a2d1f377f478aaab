//! Crate-wide error type.

/// Errors produced by meshing, simulation, inversion, and training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("hole at ({x:.4}, {y:.4}) m with radius {radius:.4} m violates the boundary clearance margin")]
    HoleTooCloseToBoundary { x: f64, y: f64, radius: f64 },

    #[error("element {element} has near-zero signed area {area:.3e} m^2")]
    SingularElement { element: usize, area: f64 },

    #[error("injection currents sum to {net:.3e} A (limit {tol:.3e} A)")]
    NonZeroNetCurrent { net: f64, tol: f64 },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("measurement frame is empty")]
    EmptyFrame,

    #[error("active-set solver exceeded the iteration cap of {0}")]
    NonConvergence(usize),

    #[error("scenario sampling exhausted the cap of {0} attempts")]
    SamplingExhausted(usize),

    #[error("cannot normalize a vector with near-zero norm")]
    ZeroVector,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged: loss became non-finite at epoch {0}")]
    Divergence(usize),

    #[error("{needed} clusters requested but only {available} damage points are available")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("no damage detected: the conductivity change is identically zero")]
    NoDamageDetected,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("mesh generation failed: {0}")]
    MeshGeneration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
