//! Zero-skipping 2D convolution operators for conv-layer propagation.
//!
//! A conv-layer needs three operators: convolution for the forward pass,
//! deconvolution (transposed convolution) for the input gradient, and
//! dilated convolution for the filter gradient. The textbook formulations
//! pad the input with zeros and, for non-unit stride, insert `stride - 1`
//! zeros between the elements of the output gradient. Every
//! multiply-accumulate that touches one of those structural zeros is
//! wasted work.
//!
//! This crate implements operators that never touch those zeros:
//!
//! - [`ops::conv_v2`] trims the filter loop bounds per output position so
//!   padded border zeros are skipped.
//! - [`ops::ks_deconv`] splits the rotated filter into `sh * sw` smaller
//!   dense kernels, one per residue class of the input coordinate modulo
//!   the stride, and composes their unit-stride convolutions.
//! - [`ops::sk_dilated`] walks the input with a leaping step equal to the
//!   stride instead of materializing a zero-inserted filter.
//!
//! Each operator returns [`stats::OpStats`] counting the multiply-accumulates
//! actually executed and the structural zeros skipped, so the complexity
//! reduction is measurable, not just asserted. The [`oracle`] module holds
//! brute-force implementations that do materialize the padded and
//! zero-inserted tensors; in 64-bit deterministic mode the fast operators
//! reproduce the oracle results exactly.
//!
//! The crate is `no_std`-compatible (`alloc` required); disable default
//! features and enable `libm` for builds without the standard library.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("cks-core requires either the `std` or the `libm` feature");

pub mod error;
pub mod gemm;
pub mod geometry;
pub mod layer;
pub mod ops;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod tensor;

mod util;

pub use error::{Error, Result};
pub use geometry::{ConvGeometry, GeometrySpec, GzPolicy, OpKind};
pub use scalar::Scalar;
pub use stats::OpStats;
pub use tensor::{Tensor4, Tensor6};
