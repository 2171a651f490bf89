use num_complex::Complex64;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by all modules of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data failed semantic validation (bad ephemeris samples, residuals
    /// above threshold, collisions in the data, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// Malformed external data (file formats, endpoint mismatches).
    #[error("format error: {0}")]
    Format(String),

    /// An evaluation point coincided with primary `body` at time `time`.
    #[error("singularity: evaluation at primary {body} at t = {time}")]
    Singularity { body: usize, time: f64 },

    /// A descent step or evaluation produced a non-finite value.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A requested feature of a path does not exist (e.g. no radius crossing).
    #[error("not found: {0}")]
    NotFound(String),

    /// Angular unwrapping could not be resolved on the current grid.
    #[error("grid too coarse to unwrap angles: {0}")]
    RefinementNeeded(String),

    /// An ODE integration approached a primary below the step floor.
    #[error("integration terminated near primary {body} at t = {time}, |z - q| = {distance:.3e}")]
    CollisionApproach {
        body: usize,
        time: f64,
        position: Complex64,
        velocity: Complex64,
        distance: f64,
    },

    /// A continuation schedule was exhausted without meeting its convergence
    /// tolerance.
    #[error("continuation failed: {0}")]
    ContinuationFailure(String),

    /// A local deformation could not satisfy its proximity bound; retry with a
    /// smaller window.
    #[error("deformation proximity bound unattainable: {0}")]
    RetryWithSmallerWindow(String),

    /// A tied-class solve could not be initialized inside the requested class.
    #[error("tied-class initialization failed: {0}")]
    InitializationFailure(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
