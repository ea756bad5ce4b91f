/// Errors shared by all solver stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Geometry that cannot be meshed or violates the perforation rules
    /// (holes touching the outer boundary, disconnected fluid region, ...).
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A linear system whose LU factorization hit a zero or near-zero pivot.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Arguments that violate an operation's contract (bad sizes, empty
    /// ladders, unknown names, conflicting boundary values, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Malformed mesh or table files.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
