use thiserror::Error;

/// Errors surfaced by the solver, grouped by the category the CLI reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("assumption (A) violated: {0}")]
    AssumptionA(String),
    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("location error: point ({0}, {1}) is outside the domain")]
    Location(f64, f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("stability certificate violated at step {step}: lhs {lhs:e} > rhs {rhs:e}")]
    Stability { step: usize, lhs: f64, rhs: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    /// Short category name, also used to pick the process exit code.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Geometry(_) | Error::AssumptionA(_) | Error::Location(..) => "geometry",
            Error::Config(_) | Error::Parse(_) => "config",
            Error::Contract(_) | Error::Domain(_) => "contract",
            Error::Resource(_) => "resource",
            Error::Solver(_) | Error::Stability { .. } => "solver",
            Error::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "geometry" => 3,
            "solver" => 4,
            "resource" => 5,
            "io" => 6,
            _ => 7,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
