use thiserror::Error;

/// Errors produced by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at node {node:?}")]
    NonFinite { node: Vec<usize> },

    #[error("point {point:?} lies outside the domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("ball B_{radius}({center:?}) is not admissible: {reason}")]
    InvalidFrame {
        center: Vec<f64>,
        radius: f64,
        reason: String,
    },

    #[error("resolution insufficient: {0}")]
    Resolution(String),

    #[error("solver did not converge after {iterations} iterations (last energy {last_energy:e})")]
    NotConverged {
        iterations: usize,
        last_energy: f64,
        history: Vec<f64>,
        last_iterate: Option<Box<crate::grid::VectorField>>,
    },

    #[error("conjugate gradient stalled at residual {residual:e} after {iterations} iterations")]
    CgNotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("Picard iteration diverged (norm {norm:e} vs initial {initial:e}); reduce |b|")]
    PicardDiverged { norm: f64, initial: f64 },

    #[error("{0} is not a free boundary point")]
    NotFreeBoundary(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("free boundary is not a graph over the tangent plane: {0}")]
    ConeViolation(String),

    #[error("malformed field file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
