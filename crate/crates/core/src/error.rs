use thiserror::Error;

use crate::grammar::ShapeViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A partial tensor operation was applied outside its domain.
    #[error("{op} undefined: {detail}")]
    Undefined { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown semiring `{0}` (expected one of: boolean, counting, probability, viterbi, log, viterbi-derivation)")]
    UnknownSemiring(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("undeclared symbol `{0}`")]
    UndeclaredSymbol(String),

    #[error("unknown terminal `{0}`")]
    UnknownTerminal(String),

    #[error("grammar error: {0}")]
    Grammar(String),

    #[error("ill-defined weights:{}", format_violations(.0))]
    IllDefined(Vec<ShapeViolation>),

    #[error("rule {rule} does not fit the item-based description {description}")]
    DescriptionMismatch { rule: String, description: String },

    /// An antecedent was read before its bucket was computed.
    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("undefined posterior: sentence has zero total probability")]
    UndefinedPosterior,
}

fn format_violations(violations: &[ShapeViolation]) -> String {
    violations.iter().map(|v| format!("\n  {v}")).collect()
}

impl Error {
    pub(crate) fn undefined(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Undefined {
            op,
            detail: detail.into(),
        }
    }
}
