//! Error type shared by tensors, geometry and operators.

use alloc::string::String;
use core::fmt;

/// Errors produced by tensor construction, geometry validation and
/// operator execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A coordinate fell outside a tensor extent.
    Index {
        axis: usize,
        index: usize,
        extent: usize,
    },
    /// Tensor dimensions do not match what an operator requires.
    Shape(String),
    /// Layer geometry violates an invariant (derived output empty,
    /// padding at least as large as the filter, ...).
    Geometry(String),
    /// A tuning or configuration parameter is out of range.
    Parameter(String),
    /// An operation was called in the wrong order.
    State(&'static str),
    /// Training diverged (non-finite loss).
    Training(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Index {
                axis,
                index,
                extent,
            } => write!(
                f,
                "index {index} out of range for axis {axis} with extent {extent}"
            ),
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::Geometry(msg) => write!(f, "invalid geometry: {msg}"),
            Error::Parameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::State(msg) => write!(f, "invalid state: {msg}"),
            Error::Training(msg) => write!(f, "training failed: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
