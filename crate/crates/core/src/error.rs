use thiserror::Error;

use crate::eigensolve::EigenResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structure has no pages")]
    EmptyStructure,

    #[error("angular gap {gap_deg:.3}° between pages is below the transversality floor {min_deg:.1}°")]
    TransversalityViolation { gap_deg: f64, min_deg: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mesh size h = {h} is too large (must be <= {max})")]
    MeshResolution { h: f64, max: f64 },

    #[error("fattening radius eps = {eps} is not below the admissible bound eps0 = {eps0}")]
    FatteningTooLarge { eps: f64, eps0: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mesh topology error: {0}")]
    MeshTopology(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("eigensolver stalled after {iterations} iterations (worst residual {worst_residual:.3e})")]
    SolverStalled {
        iterations: usize,
        worst_residual: f64,
        partial: Box<EigenResult>,
    },

    #[error("problem dimension {n} exceeds the dense limit {limit}")]
    SizeLimit { n: usize, limit: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("cutoff {cutoff} lies within {distance:.3e} of eigenvalue {eigenvalue}")]
    CutoffOnEigenvalue {
        cutoff: f64,
        eigenvalue: f64,
        distance: f64,
    },

    #[error("unknown {kind} strategy '{name}' (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
