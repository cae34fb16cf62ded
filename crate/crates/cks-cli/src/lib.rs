//! IO, file formats and command implementations for the `cks` binary.
//!
//! Everything the operators themselves need lives in `cks-core`; this
//! crate adds the std-only surface: tensor serialization, geometry files,
//! the randomized verifier, the timing harness and the analytic curve
//! sweeps.

pub mod analyze;
pub mod bench;
pub mod blob;
pub mod fixtures;
pub mod suites;
pub mod verify;
