use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} exceeds tolerance {tolerance:.3e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not Hurwitz: eigenvalue {re:.6e}{im:+.6e}i has nonnegative real part")]
    NotHurwitz { re: f64, im: f64 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("linear system is rank deficient: rank {rank} < {required} unknowns")]
    RankDeficient { rank: usize, required: usize },

    #[error("least-squares residual {residual:.3e} exceeds threshold {threshold:.3e}")]
    Residual { residual: f64, threshold: f64 },

    #[error("iteration did not converge after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },

    #[error("only {found} attack-free data windows fit, {required} required")]
    InsufficientWindows { found: usize, required: usize },

    #[error("invalid DoS schedule: {0}")]
    Schedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing input {path}: {hint}")]
    MissingInput { path: String, hint: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
