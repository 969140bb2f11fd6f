use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(
        "grid mismatch: {left_nx}x{left_ny} (h={left_h}) vs {right_nx}x{right_ny} (h={right_h})"
    )]
    GridMismatch {
        left_nx: usize,
        left_ny: usize,
        left_h: f64,
        right_nx: usize,
        right_ny: usize,
        right_h: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reference region is empty")]
    EmptyReference,

    #[error("field contains a non-finite value at cell {0}")]
    NonFinite(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("stiffness matrix is singular at dof {dof} (insufficient restraints?)")]
    Singular { dof: usize },

    #[error("solve did not reach tolerance: relative residual {residual:e}")]
    SolverTolerance { residual: f64 },

    #[error("target of {target_cells} cells is below the {frozen_cells} frozen cells")]
    InfeasibleTarget {
        target_cells: usize,
        frozen_cells: usize,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
