use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("step size underflow at s = {s}")]
    StepFailure { s: f64 },

    #[error("orbit left the unit disk at s = {s}: y²+z² = {norm2}")]
    DomainExit { s: f64, norm2: f64 },

    #[error("x lift degenerate: 1 - y² - z² = {margin:e}")]
    NearPole { margin: f64 },

    #[error("no admissible root: {0}")]
    NoRoot(String),

    #[error("x never reaches cos r = {target} (a = {a})")]
    NoCrossing { a: f64, target: f64 },

    #[error("no convergence after {iterations} iterations, bracket [{lo}, {hi}], |f| = {residual:e}: {detail}")]
    NoConvergence {
        iterations: usize,
        lo: f64,
        hi: f64,
        residual: f64,
        detail: String,
    },

    #[error("trace covers [0, {covered}] but {required} is needed")]
    CoverageError { covered: f64, required: f64 },

    #[error("mode {k} is Dirichlet-degenerate: |psi(s_r)| = {value:e}")]
    DirichletDegeneracy { k: usize, value: f64 },

    #[error("verification failed: {0}")]
    VerificationFailure(String),

    #[error("inadmissible direction: {0}")]
    Inadmissible(String),

    #[error("degenerate frame at row {row}: rho = {rho:e}")]
    FrameDegeneracy { row: usize, rho: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable name of the variant, used in diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::StepFailure { .. } => "StepFailure",
            Error::DomainExit { .. } => "DomainExit",
            Error::NearPole { .. } => "NearPole",
            Error::NoRoot(_) => "NoRoot",
            Error::NoCrossing { .. } => "NoCrossing",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::CoverageError { .. } => "CoverageError",
            Error::DirichletDegeneracy { .. } => "DirichletDegeneracy",
            Error::VerificationFailure(_) => "VerificationFailure",
            Error::Inadmissible(_) => "Inadmissible",
            Error::FrameDegeneracy { .. } => "FrameDegeneracy",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// Usage problems as opposed to numerical failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Io(_) | Error::Json(_))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() })
    }
}
