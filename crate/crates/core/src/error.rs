use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension 2^{requested} exceeds the dense cap 2^{cap}")]
    CapExceeded { requested: usize, cap: u32 },

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("vectors are not orthonormal: {0}")]
    NotOrthonormal(String),

    #[error("matrix is not hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("bad block: {0}")]
    BadBlock(String),

    #[error("bad family parameters at n = {n}: {reason}")]
    BadFamilyParams { n: usize, reason: String },

    #[error("bad query: {0}")]
    BadQuery(String),

    #[error("prefix {prefix:?} has measure zero")]
    MeasureZeroPrefix { prefix: String },

    #[error("stage {0} is not materialized")]
    MissingStage(usize),

    #[error("level {m} needs {} blocks but the budget is {budget}", required.map_or_else(|| "beyond the search limit".to_string(), |n| format!("N = {n}")))]
    BudgetExceeded { m: usize, required: Option<usize>, budget: usize },

    #[error("stream too short: {got} bits, at least {need} required")]
    InsufficientData { got: usize, need: usize },

    #[error("invalid test: {0}")]
    InvalidTest(String),

    #[error("state covers only {covered} qubits, {requested} requested")]
    OutOfCoverage { covered: usize, requested: usize },
}

impl Error {
    /// True for errors caused by a resource cap rather than malformed input.
    pub fn is_resource_cap(&self) -> bool {
        matches!(self, Error::CapExceeded { .. } | Error::BudgetExceeded { .. })
    }
}
