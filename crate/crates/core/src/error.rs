use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("element {id} out of range (grid has {count} elements)")]
    InvalidElement { id: usize, count: usize },

    #[error("patch of element {center} at level {level} covers the whole domain")]
    PatchCoversDomain { center: usize, level: usize },

    #[error("fine grid with {fine} cells per axis does not refine coarse grid with {coarse}")]
    NonNested { coarse: usize, fine: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("velocity field: {0}")]
    Velocity(String),

    #[error("linear solve failed: {reason} (relative residual {residual:e})")]
    Solve { reason: String, residual: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },

    #[error("patch problem of element {center} (source element {source_element:?}): {inner}")]
    Patch {
        center: usize,
        source_element: Option<usize>,
        inner: Box<Error>,
    },

    #[error("basis construction failed for {} element(s): {}", .0.len(), summarize(.0))]
    Basis(Vec<(usize, String)>),

    #[error("singular coarse system (condition estimate {condition:e})")]
    SingularCoarse { condition: f64 },

    #[error("cache: {0}")]
    Cache(String),

    #[error("cache key mismatch: {0}")]
    CacheKeyMismatch(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(failures: &[(usize, String)]) -> String {
    failures
        .iter()
        .take(3)
        .map(|(id, msg)| format!("[{id}] {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
