use core::fmt;

/// Errors reported by planning and model-construction entry points.
///
/// Numerical breakdowns inside the optimizers are not errors; they are
/// reported through the run status so the last finite iterate survives.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidArgument { what: &'static str },
    /// Vector/trajectory dimensions disagree.
    DimensionMismatch { expected: usize, got: usize },
    /// An index referenced a missing ball, link, or waypoint.
    IndexOutOfRange { what: &'static str, index: usize, len: usize },
    /// A fixed boundary configuration starts inside an obstacle.
    BoundaryInCollision { which: &'static str, ball: usize, distance: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument { what } => write!(f, "invalid argument: {what}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::IndexOutOfRange { what, index, len } => {
                write!(f, "{what} index {index} out of range (len {len})")
            }
            Error::BoundaryInCollision { which, ball, distance } => write!(
                f,
                "{which} configuration is in collision (ball {ball}, signed distance {distance})"
            ),
        }
    }
}

impl core::error::Error for Error {}
