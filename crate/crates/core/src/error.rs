use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular path loss at origin")]
    SingularPathLoss,
    #[error("coincident points have undefined path loss")]
    CoincidentPoints,
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("relay selection failed: {0}")]
    Selection(String),
    #[error("assignment failed: {0}")]
    Assignment(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("infeasible power allocation: {0}")]
    Infeasible(String),
}
