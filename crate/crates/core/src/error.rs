use thiserror::Error;

/// Errors raised across the detection toolkit.
#[derive(Debug, Error)]
pub enum AlidError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: expected {expected} components, found {found}")]
    WrongArity {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: cannot parse {token:?} as a number")]
    Parse { line: usize, token: String },

    #[error("record {record}, component {component}: non-finite value")]
    NonFiniteComponent { record: usize, component: usize },

    #[error("input contains no points")]
    EmptyInput,

    #[error("malformed file: {0}")]
    Format(String),

    #[error("index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid kernel parameters: k = {k}, p = {p}")]
    InvalidKernel { k: f64, p: f64 },

    #[error("immunization requested on vertex {index} carrying the whole weight")]
    ImmunizeSingleton { index: usize },

    #[error("subgraph has zero density; the hyperball is undefined")]
    ZeroDensity,

    #[error("point {index} is not present in the index")]
    NotIndexed { index: usize },

    #[error("seed vertex {seed} has already been peeled")]
    SeedExcluded { seed: usize },

    #[error("dense affinity matrix for n = {n} exceeds the limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("replicator dynamics cannot start: x^T A x stays zero")]
    DegenerateStart,

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index was built for {index_n} points of dimension {index_d}, data has {data_n} x {data_d}")]
    IndexMismatch {
        index_n: usize,
        index_d: usize,
        data_n: usize,
        data_d: usize,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = AlidError> = std::result::Result<T, E>;
