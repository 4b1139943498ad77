use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{n} qubits exceeds the cap of {cap}")]
    SizeCap { n: usize, cap: usize },

    #[error("no consistent dressing assignment; frustrated edges: {edges:?}")]
    FrustratedCouplings { edges: Vec<(usize, usize)> },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("ambiguous adiabatic connection: {0}")]
    AmbiguousConnection(String),

    #[error("time {t} us lies outside the schedule [0, {total}] us")]
    TimeOutOfRange { t: f64, total: f64 },

    #[error("step size underflow at t = {t} us (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integrator exceeded {steps} steps at t = {t} us (last error norm {achieved_error:e})")]
    StepLimit { steps: usize, t: f64, achieved_error: f64 },

    #[error("density matrix lost positivity (min eigenvalue {min_eigenvalue:e})")]
    Positivity { min_eigenvalue: f64 },

    #[error("ground state is {count}-fold degenerate")]
    DegenerateGround { count: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the failure came out of the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Eigensolver(_)
                | Error::AmbiguousConnection(_)
                | Error::StepSizeUnderflow { .. }
                | Error::StepLimit { .. }
                | Error::Positivity { .. }
                | Error::DegenerateGround { .. }
                | Error::DegenerateFit(_)
                | Error::FrustratedCouplings { .. }
        )
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidProblem(_) => "invalid_problem",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::SizeCap { .. } => "size_cap",
            Error::FrustratedCouplings { .. } => "frustrated_couplings",
            Error::Eigensolver(_) => "eigensolver",
            Error::AmbiguousConnection(_) => "ambiguous_connection",
            Error::TimeOutOfRange { .. } => "time_out_of_range",
            Error::StepSizeUnderflow { .. } => "step_size_underflow",
            Error::StepLimit { .. } => "step_limit",
            Error::Positivity { .. } => "positivity",
            Error::DegenerateGround { .. } => "degenerate_ground",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { pointer: pointer.into(), message: message.into() }
    }
}
