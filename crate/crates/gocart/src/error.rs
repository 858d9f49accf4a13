use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    #[error("matrix is not positive definite (pivot {pivot} is {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("{what} did not converge: residual {residual:e} after {iters} iterations")]
    NoConvergence {
        what: &'static str,
        residual: f64,
        iters: usize,
    },

    #[error("solver failed at lambda = {lambda}")]
    SolverAtLambda {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("tree class too large: {count} trees exceeds cap {cap}")]
    TooLarge { count: u128, cap: u128 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point outside [0,1]^d: coordinate {coord} is {value}")]
    OutOfDomain { coord: usize, value: f64 },

    #[error("kernel weights underflowed to zero")]
    DegenerateWeights,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("bad data: {0}")]
    Data(String),
}

impl Error {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
        let context = context.into();
        move |source| Error::Io { context, source }
    }

    pub fn csv(context: impl Into<String>) -> impl FnOnce(csv::Error) -> Error {
        let context = context.into();
        move |source| Error::Csv { context, source }
    }

    pub fn json(context: impl Into<String>) -> impl FnOnce(serde_json::Error) -> Error {
        let context = context.into();
        move |source| Error::Json { context, source }
    }
}
