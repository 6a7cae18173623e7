use thiserror::Error;

/// Errors raised by the simulator and the verification harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or input fell outside its admissible domain.
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    /// Spectral data lost Hermitian symmetry, so the inverse would not be real.
    #[error("spectral coefficients are not Hermitian (max asymmetry {asymmetry:.3e})")]
    HermitianSymmetry { asymmetry: f64 },

    /// The clogged mobility was evaluated below its guard floor.
    #[error("degenerate mobility: sample {value:.3e} at index {index} is below the guard {guard:.3e}")]
    DegenerateMobility { index: usize, value: f64, guard: f64 },

    /// The step controller could not find an admissible step.
    #[error("step failed at t = {time:.6e} with dt = {dt:.3e}: {reason}")]
    StepFailure { time: f64, dt: f64, reason: String },

    /// Too few samples to fit a power law.
    #[error("power-law fit needs at least {needed} samples in the window, found {found}")]
    InsufficientSamples { needed: usize, found: usize },
}

impl Error {
    pub fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation { what, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
