//! Route selection between the common and the zero-skipping paths.
//!
//! Filter trimming pays off once the proportion of padded zeros in the
//! input exceeds a small threshold (6% by default; a 32x32 input with
//! padding 1 sits at ~11.4% and routes to the trimmed path). For
//! deconvolution at unit stride nothing is inserted and the dense direct
//! path is the simpler and faster choice.

use crate::error::Result;
use crate::geometry::ConvGeometry;
use crate::scalar::Scalar;
use crate::stats::OpStats;
use crate::tensor::Tensor4;

use super::conv::{conv_common, conv_v2};
use super::deconv::{deconv_common_unit_stride, ks_deconv, ks_deconv_v2};
use super::dilated::{sk_dilated, sk_dilated_v2};
use super::split::ks_split;

/// Dispatch thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchPolicy {
    /// Minimum [`ConvGeometry::pad_zero_fraction`] for filter trimming to
    /// be selected.
    pub trim_threshold: f64,
}

impl Default for DispatchPolicy {
    fn default() -> Self {
        DispatchPolicy {
            trim_threshold: 0.06,
        }
    }
}

impl DispatchPolicy {
    fn wants_trimming(&self, g: &ConvGeometry) -> bool {
        g.pad_zero_fraction() > self.trim_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvRoute {
    Common,
    Trimmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeconvRoute {
    CommonUnitStride,
    KernelSplit,
    KernelSplitTrimmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DilatedRoute {
    Leaping,
    LeapingTrimmed,
}

pub fn conv_route(g: &ConvGeometry, policy: &DispatchPolicy) -> ConvRoute {
    if policy.wants_trimming(g) {
        ConvRoute::Trimmed
    } else {
        ConvRoute::Common
    }
}

pub fn deconv_route(g: &ConvGeometry, policy: &DispatchPolicy) -> DeconvRoute {
    if g.sh() == 1 && g.sw() == 1 {
        DeconvRoute::CommonUnitStride
    } else if policy.wants_trimming(g) {
        DeconvRoute::KernelSplitTrimmed
    } else {
        DeconvRoute::KernelSplit
    }
}

pub fn dilated_route(g: &ConvGeometry, policy: &DispatchPolicy) -> DilatedRoute {
    if policy.wants_trimming(g) {
        DilatedRoute::LeapingTrimmed
    } else {
        DilatedRoute::Leaping
    }
}

/// Forward convolution via the route selected by `policy`.
pub fn dispatch_conv<S: Scalar>(
    x: &Tensor4<S>,
    w: &Tensor4<S>,
    g: &ConvGeometry,
    policy: &DispatchPolicy,
) -> Result<(Tensor4<S>, OpStats)> {
    match conv_route(g, policy) {
        ConvRoute::Trimmed => conv_v2(x, w, g),
        ConvRoute::Common => conv_common(x, w, g),
    }
}

/// Input gradient via the route selected by `policy`. On the split routes
/// the kernel pack is built here and dropped when the call returns;
/// callers that loop over propagation should build it once with
/// [`ks_split`] and call the split kernels directly.
pub fn dispatch_deconv<S: Scalar>(
    dy: &Tensor4<S>,
    w: &Tensor4<S>,
    g: &ConvGeometry,
    policy: &DispatchPolicy,
) -> Result<(Tensor4<S>, OpStats)> {
    match deconv_route(g, policy) {
        DeconvRoute::CommonUnitStride => deconv_common_unit_stride(dy, w, g),
        DeconvRoute::KernelSplit => {
            let ks = ks_split(w, g)?;
            ks_deconv(dy, &ks, g)
        }
        DeconvRoute::KernelSplitTrimmed => {
            let ks = ks_split(w, g)?;
            ks_deconv_v2(dy, &ks, g)
        }
    }
}

/// Filter gradient via the route selected by `policy`.
pub fn dispatch_dilated<S: Scalar>(
    x: &Tensor4<S>,
    dy: &Tensor4<S>,
    g: &ConvGeometry,
    policy: &DispatchPolicy,
) -> Result<(Tensor4<S>, OpStats)> {
    match dilated_route(g, policy) {
        DilatedRoute::LeapingTrimmed => sk_dilated_v2(x, dy, g),
        DilatedRoute::Leaping => sk_dilated(x, dy, g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySpec;
    use crate::oracle::{naive_conv2d, naive_deconv2d, naive_dilated_conv2d};
    use crate::rng::SplitMix64;

    fn geometry(ih: usize, f: usize, s: usize, p: usize) -> ConvGeometry {
        GeometrySpec {
            n: 1,
            ih,
            iw: ih,
            ic: 2,
            oc: 2,
            fh: f,
            fw: f,
            sh: s,
            sw: s,
            ph: p,
            pw: p,
        }
        .infer()
        .unwrap()
    }

    #[test]
    fn unit_stride_deconv_takes_the_common_path() {
        let policy = DispatchPolicy::default();
        let g = geometry(8, 3, 1, 1);
        assert_eq!(deconv_route(&g, &policy), DeconvRoute::CommonUnitStride);
    }

    #[test]
    fn thirty_two_with_padding_one_trims() {
        // fraction ~ 0.114 > 0.06
        let policy = DispatchPolicy::default();
        let g = geometry(32, 3, 2, 1);
        assert_eq!(conv_route(&g, &policy), ConvRoute::Trimmed);
        assert_eq!(deconv_route(&g, &policy), DeconvRoute::KernelSplitTrimmed);
        assert_eq!(dilated_route(&g, &policy), DilatedRoute::LeapingTrimmed);
    }

    #[test]
    fn no_padding_stays_on_the_plain_paths() {
        let policy = DispatchPolicy::default();
        let g = geometry(8, 3, 2, 0);
        assert_eq!(conv_route(&g, &policy), ConvRoute::Common);
        assert_eq!(deconv_route(&g, &policy), DeconvRoute::KernelSplit);
        assert_eq!(dilated_route(&g, &policy), DilatedRoute::Leaping);
    }

    #[test]
    fn large_input_with_small_padding_stays_common() {
        // 128x128 with padding 1: fraction ~ 0.031 < 0.06
        let policy = DispatchPolicy::default();
        let g = geometry(128, 3, 2, 1);
        assert!(g.pad_zero_fraction() < 0.06);
        assert_eq!(conv_route(&g, &policy), ConvRoute::Common);
    }

    #[test]
    fn results_are_route_independent() {
        let policy = DispatchPolicy::default();
        let mut rng = SplitMix64::new(6);
        for g in [
            geometry(8, 3, 1, 1),  // unit stride, trimming fraction high
            geometry(9, 3, 2, 1),  // split path, trimmed
            geometry(32, 3, 2, 1), // split path, trimmed
            geometry(8, 3, 2, 0),  // plain paths
        ] {
            let mut x = Tensor4::<f64>::zeros(g.input_dims());
            let mut w = Tensor4::<f64>::zeros(g.filter_dims());
            let mut dy = Tensor4::<f64>::zeros(g.output_dims());
            x.fill_uniform(&mut rng, -1.0, 1.0);
            w.fill_uniform(&mut rng, -1.0, 1.0);
            dy.fill_uniform(&mut rng, -1.0, 1.0);

            let (y, _) = dispatch_conv(&x, &w, &g, &policy).unwrap();
            let (expect, _) = naive_conv2d(&x, &w, &g).unwrap();
            assert_eq!(y.data(), expect.data());

            let (dx, _) = dispatch_deconv(&dy, &w, &g, &policy).unwrap();
            let (expect, _) = naive_deconv2d(&dy, &w, &g).unwrap();
            assert_eq!(dx.data(), expect.data());

            let (dw, _) = dispatch_dilated(&x, &dy, &g, &policy).unwrap();
            let (expect, _) = naive_dilated_conv2d(&x, &dy, &g).unwrap();
            assert_eq!(dw.data(), expect.data());
        }
    }
}
