use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid masses: {0}")]
    InvalidMasses(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size mismatch: expected {expected} cells, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("positivity failure at t = {t}: min concentration {min} with dt = {dt}")]
    PositivityFailure { t: f64, min: f64, dt: f64 },

    #[error("singular tridiagonal system at row {row}")]
    LinearSolveFailure { row: usize },

    #[error("solver failed at t = {t}: {source}")]
    SolverAt {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("reaction set has zero measure; the inequality does not apply")]
    EmptyOmega,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("linear growth rate {0} is not positive; the boundary equilibrium is not unstable")]
    RateNonPositive(f64),

    #[error("mesh too large for dense eigensolve: {n_cells} cells (max {max})")]
    MeshTooLarge { n_cells: usize, max: usize },

    #[error("probe time {t_probe} is after the escape time {escape} for delta = {delta}")]
    ProbeAfterEscape {
        t_probe: f64,
        escape: f64,
        delta: f64,
    },

    #[error("deviation at delta = {delta} ({deviation:e}) is not resolvable above the scheme's linear truncation error ({floor:e})")]
    NoNonlinearDeviation {
        delta: f64,
        deviation: f64,
        floor: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::PositivityFailure { .. }
            | Error::LinearSolveFailure { .. }
            | Error::SolverAt { .. } => 3,
            Error::RegimeMismatch(_) | Error::RateNonPositive(_) => 4,
            _ => 2,
        }
    }

    /// Short machine-readable name, used in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMasses(_) => "InvalidMasses",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::SizeMismatch { .. } => "SizeMismatch",
            Error::PositivityFailure { .. } => "PositivityFailure",
            Error::LinearSolveFailure { .. } => "LinearSolveFailure",
            Error::SolverAt { source, .. } => source.kind(),
            Error::EmptyOmega => "EmptyOmega",
            Error::InsufficientData(_) => "InsufficientData",
            Error::RegimeMismatch(_) => "RegimeMismatch",
            Error::RateNonPositive(_) => "RateNonPositive",
            Error::MeshTooLarge { .. } => "MeshTooLarge",
            Error::ProbeAfterEscape { .. } => "ProbeAfterEscape",
            Error::NoNonlinearDeviation { .. } => "NoNonlinearDeviation",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }

    /// Time at which a solver failure happened, when known.
    pub fn failing_time(&self) -> Option<f64> {
        match self {
            Error::SolverAt { t, .. } => Some(*t),
            Error::PositivityFailure { t, .. } => Some(*t),
            _ => None,
        }
    }
}
