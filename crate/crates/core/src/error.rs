/// Errors produced by schedule construction, training, solving, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter is out of its documented range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Dimensions or lengths of related inputs disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The data admits no meaningful answer (zero variance, empty support, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numeric quantity left the finite range mid-computation.
    #[error("numeric failure at step {step}: {detail}")]
    Numeric { step: usize, detail: String },

    /// An iterative method stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    /// The training loop produced a non-finite loss.
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Training { iteration: usize, loss: f64 },

    /// The problem size exceeds what the chosen algorithm is meant for.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Two artifacts that must agree (models, schedules) do not.
    #[error("incompatible inputs: {0}")]
    Compatibility(String),

    /// A file's contents do not match the expected format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
