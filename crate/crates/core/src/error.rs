use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors emitted by matrix, attention, fitting, and training operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible with the requested operation.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A matrix constructor received zero rows or columns.
    InvalidDimensions { rows: usize, cols: usize },
    /// Backing data length does not match `rows * cols`.
    DataLength { expected: usize, got: usize },
    /// Allocating a matrix of the given shape failed.
    Allocation { rows: usize, cols: usize },
    /// A normalizing denominator collapsed below the guard threshold.
    DegenerateDenominator { row: usize, value: f64 },
    /// Fewer usable data points than the operation requires.
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    /// A quantity that must be strictly positive was not.
    NonPositive { what: &'static str, value: f64 },
    /// Contrastive loss needs at least two pairs per batch.
    DegenerateBatch { size: usize },
    /// Training produced a non-finite loss at the given step.
    Divergence { step: usize },
    /// A configuration field or field combination is invalid.
    InvalidConfig { what: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::InvalidDimensions { rows, cols } => {
                write!(f, "invalid matrix dimensions {rows}x{cols}")
            }
            Error::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape (expected {expected})")
            }
            Error::Allocation { rows, cols } => {
                write!(f, "failed to allocate a {rows}x{cols} matrix")
            }
            Error::DegenerateDenominator { row, value } => {
                write!(f, "degenerate attention denominator {value:e} in row {row}")
            }
            Error::InsufficientData { what, needed, got } => {
                write!(f, "insufficient data: need {needed} {what}, got {got}")
            }
            Error::NonPositive { what, value } => {
                write!(f, "{what} must be positive, got {value}")
            }
            Error::DegenerateBatch { size } => {
                write!(f, "batch of size {size} is too small for a contrastive loss")
            }
            Error::Divergence { step } => {
                write!(f, "training diverged (non-finite loss) at step {step}")
            }
            Error::InvalidConfig { what } => write!(f, "invalid configuration: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
