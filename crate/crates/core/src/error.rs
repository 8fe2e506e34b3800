use std::fmt;

use thiserror::Error;

/// One problem found while validating a model specification against a table.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("unknown factor \"{factor}\" referenced by term {term}")]
    UnknownFactor { term: String, factor: String },
    #[error("duplicate term {0}")]
    DuplicateTerm(String),
    #[error("interaction {term} without its factor main effect nominal_main({factor})")]
    InteractionWithoutFactor { term: String, factor: String },
    #[error("empty table")]
    EmptyTable,
    #[error("model has no terms")]
    NoTerms,
    #[error("term {0} cannot change its penalization")]
    PenalizationNotAllowed(String),
    #[error("random intercept needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("knot count must be positive")]
    ZeroKnots,
}

/// Wrapper so the exhaustive list prints on one line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecErrors(pub Vec<SpecError>);

impl fmt::Display for SpecErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    Spec(SpecErrors),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{0}")]
    Schema(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("singular fit: rank-deficient columns {0:?}")]
    SingularFit(Vec<String>),

    #[error("criterion error: {0}")]
    Criterion(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("{0}")]
    Inference(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures reading or writing files, as opposed to domain errors.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Schema(_) | Error::Data(_))
    }
}

impl From<Vec<SpecError>> for Error {
    fn from(errs: Vec<SpecError>) -> Self {
        Error::Spec(SpecErrors(errs))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
