//! Zero-skipping operators.
//!
//! Every operator here produces the same values as its brute-force
//! counterpart in [`crate::oracle`] while executing strictly fewer
//! multiply-accumulates whenever structural zeros exist. In 64-bit mode
//! the agreement is exact because both sides accumulate each output
//! element in the same fixed order.

mod conv;
mod deconv;
mod dilated;
mod dispatch;
mod split;

pub use conv::{conv_common, conv_v2};
pub use deconv::{deconv_common_unit_stride, ks_deconv, ks_deconv_split_macs, ks_deconv_v2};
pub use dilated::{sk_dilated, sk_dilated_v2};
pub use dispatch::{
    conv_route, deconv_route, dilated_route, dispatch_conv, dispatch_deconv, dispatch_dilated,
    ConvRoute, DeconvRoute, DilatedRoute, DispatchPolicy,
};
pub use split::{ks_split, KernelSplit};
