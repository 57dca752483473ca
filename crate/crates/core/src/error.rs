use thiserror::Error;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input shape or an invariant the caller violated.
    Input,
    /// A hypothesis or precondition of the construction does not hold.
    Precondition,
    /// Rank or residual failure inside a numerical step.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("component {component}: monomial {monomial} is not torus-equivariant")]
    NotEquivariant { component: usize, monomial: String },

    #[error("right-hand side is not in the kernel of the equivariant projection (remainder {remainder:.3e})")]
    NotInKernel { remainder: f64 },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("duplicate delay point {0}")]
    DuplicateDelay(f64),

    #[error("singular delay placement (condition number {condition:.3e})")]
    SingularPlacement { condition: f64 },

    #[error(
        "root count mismatch on Re in [{re_lo:.4}, {re_hi:.4}], Im in [{im_lo:.4}, {im_hi:.4}]: \
         winding number {winding}, Newton harvest {harvested}; refine the grid"
    )]
    RootCountMismatch {
        re_lo: f64,
        re_hi: f64,
        im_lo: f64,
        im_hi: f64,
        winding: i64,
        harvested: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("quadrature too coarse: need at least {required} steps, got {given}")]
    Quadrature { required: usize, given: usize },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidSpace(_)
            | Error::DimensionMismatch { .. }
            | Error::DuplicateDelay(_)
            | Error::Quadrature { .. } => ErrorKind::Input,
            Error::NotEquivariant { .. }
            | Error::NotInKernel { .. }
            | Error::Hypothesis(_)
            | Error::Precondition(_) => ErrorKind::Precondition,
            Error::RankDeficient(_)
            | Error::Numerical(_)
            | Error::Residual { .. }
            | Error::SingularPlacement { .. }
            | Error::RootCountMismatch { .. } => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
