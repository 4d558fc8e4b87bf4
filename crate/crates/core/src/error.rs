use thiserror::Error;

/// Errors surfaced by library operations. Validation problems that are
/// reported rather than raised live in [`crate::report::ValidationReport`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("cyclic order undefined: points {0} and {1} coincide")]
    NonDistinctPoints(String, String),

    #[error("{0} is not a regular value: {1}")]
    NotRegular(String, String),

    #[error("fiber product not transverse: {0}")]
    NotTransverse(String),

    #[error("operation requires a validated system: {0}")]
    NotValidated(String),

    #[error("base point assignment is not generic: {0}")]
    NotGeneric(String),

    #[error("exhausted candidate budget while searching for generic base points: {0}")]
    ExhaustedCandidates(String),

    #[error("morphisms are not composable: {0}")]
    NotComposable(String),

    #[error("composed morphism failed validation: {0}")]
    ResultInvalid(String),

    #[error("glued system failed validation: {0}")]
    GluedSystemInvalid(String),

    #[error("chain map identity failed: {0}")]
    ChainMapIdentityFailed(String),

    #[error("chain homotopy identity failed: {0}")]
    IdentityFailed(String),

    #[error("differentials do not form a complex: {0}")]
    NotAComplex(String),

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("parity violation in differential: {0}")]
    ParityViolation(String),

    #[error("unsupported cell data: {0}")]
    Unsupported(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
