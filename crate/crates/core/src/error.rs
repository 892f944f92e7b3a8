use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("unknown {kind} identifier {id}")]
    UnknownEntity { kind: &'static str, id: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("evaluation point {0:?} coincides with a boundary vertex")]
    VertexPoint([f64; 2]),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
