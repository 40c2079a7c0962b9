use thiserror::Error;

/// Errors raised by the decomposition, transform, simulation and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KronError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("term count {requested} outside 1..={max}")]
    InvalidTermCount { requested: usize, max: usize },

    #[error("RankDeficient: requested {requested} terms but the rearranged matrix has numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("DegenerateTerms: {0}")]
    DegenerateTerms(String),

    #[error("NotSpd: {0}")]
    NotSpd(String),

    #[error("IllConditioned: {0}")]
    IllConditioned(String),

    #[error("SingularG0: contemporaneous matrix has condition number {condition:.3e}")]
    SingularG0 { condition: f64 },

    #[error("Unstable: companion spectral radius {radius:.6} is not below {bound:.6}")]
    Unstable { radius: f64, bound: f64 },

    #[error("RankDeficientRegressors: {0}")]
    RankDeficientRegressors(String),

    #[error("InfeasibleConstraints: {0}")]
    InfeasibleConstraints(String),

    #[error("IdentificationDeficit: over-identification count is {count} for the unknown-weight problem")]
    IdentificationDeficit { count: i64 },
}

impl KronError {
    /// Short variant name, used by front ends to report which estimator failure occurred.
    pub fn name(&self) -> &'static str {
        match self {
            KronError::ShapeMismatch(_) => "ShapeMismatch",
            KronError::InvalidModel(_) => "InvalidModel",
            KronError::InvalidTermCount { .. } => "InvalidTermCount",
            KronError::RankDeficient { .. } => "RankDeficient",
            KronError::DegenerateTerms(_) => "DegenerateTerms",
            KronError::NotSpd(_) => "NotSpd",
            KronError::IllConditioned(_) => "IllConditioned",
            KronError::SingularG0 { .. } => "SingularG0",
            KronError::Unstable { .. } => "Unstable",
            KronError::RankDeficientRegressors(_) => "RankDeficientRegressors",
            KronError::InfeasibleConstraints(_) => "InfeasibleConstraints",
            KronError::IdentificationDeficit { .. } => "IdentificationDeficit",
        }
    }
}

pub type Result<T> = std::result::Result<T, KronError>;
