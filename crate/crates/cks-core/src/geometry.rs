//! Conv-layer geometry: shape inference, validity checks, zero-proportion
//! analytics and the analytic time-complexity (flop) formulas used by the
//! benchmark reports.

use alloc::format;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// The three operators of conv-layer propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    /// Forward pass.
    Conv,
    /// Input gradient (transposed convolution).
    Deconv,
    /// Filter gradient.
    Dilated,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv => "conv",
            OpKind::Deconv => "deconv",
            OpKind::Dilated => "dilated",
        }
    }
}

/// Layer parameters before output-shape inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometrySpec {
    /// Batch size.
    pub n: usize,
    /// Input height / width / channels.
    pub ih: usize,
    pub iw: usize,
    pub ic: usize,
    /// Output channels.
    pub oc: usize,
    /// Filter height / width.
    pub fh: usize,
    pub fw: usize,
    /// Stride per axis (>= 1).
    pub sh: usize,
    pub sw: usize,
    /// Zero padding per axis side.
    pub ph: usize,
    pub pw: usize,
}

impl GeometrySpec {
    /// Derives the output extents and validates every invariant.
    pub fn infer(self) -> Result<ConvGeometry> {
        let GeometrySpec {
            n,
            ih,
            iw,
            ic,
            oc,
            fh,
            fw,
            sh,
            sw,
            ph,
            pw,
        } = self;
        for (name, v) in [
            ("n", n),
            ("ih", ih),
            ("iw", iw),
            ("ic", ic),
            ("oc", oc),
            ("fh", fh),
            ("fw", fw),
            ("sh", sh),
            ("sw", sw),
        ] {
            if v == 0 {
                return Err(Error::Geometry(format!("{name} must be positive")));
            }
        }
        // Trimmed filters must stay nonempty: every patch has to intersect
        // the valid region.
        if ph >= fh || pw >= fw {
            return Err(Error::Geometry(format!(
                "padding ({ph}, {pw}) must be smaller than the filter ({fh}, {fw})"
            )));
        }
        if fh > ih + 2 * ph || fw > iw + 2 * pw {
            return Err(Error::Geometry(format!(
                "filter ({fh}, {fw}) exceeds padded input ({}, {})",
                ih + 2 * ph,
                iw + 2 * pw
            )));
        }
        let oh = (ih + 2 * ph - fh) / sh + 1;
        let ow = (iw + 2 * pw - fw) / sw + 1;
        if oh == 0 || ow == 0 {
            return Err(Error::Geometry(format!(
                "derived output ({oh}, {ow}) is empty"
            )));
        }
        Ok(ConvGeometry {
            n,
            ih,
            iw,
            ic,
            oc,
            fh,
            fw,
            sh,
            sw,
            ph,
            pw,
            oh,
            ow,
        })
    }
}

/// Validated conv-layer geometry, including the derived output extents.
///
/// Output shape uses floor division; geometries with a stride remainder
/// are legal, and gradient shapes are always taken from the stored
/// geometry rather than re-derived from the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    n: usize,
    ih: usize,
    iw: usize,
    ic: usize,
    oc: usize,
    fh: usize,
    fw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn ih(&self) -> usize {
        self.ih
    }
    pub fn iw(&self) -> usize {
        self.iw
    }
    pub fn ic(&self) -> usize {
        self.ic
    }
    pub fn oc(&self) -> usize {
        self.oc
    }
    pub fn fh(&self) -> usize {
        self.fh
    }
    pub fn fw(&self) -> usize {
        self.fw
    }
    pub fn sh(&self) -> usize {
        self.sh
    }
    pub fn sw(&self) -> usize {
        self.sw
    }
    pub fn ph(&self) -> usize {
        self.ph
    }
    pub fn pw(&self) -> usize {
        self.pw
    }
    pub fn oh(&self) -> usize {
        self.oh
    }
    pub fn ow(&self) -> usize {
        self.ow
    }

    pub fn spec(&self) -> GeometrySpec {
        GeometrySpec {
            n: self.n,
            ih: self.ih,
            iw: self.iw,
            ic: self.ic,
            oc: self.oc,
            fh: self.fh,
            fw: self.fw,
            sh: self.sh,
            sw: self.sw,
            ph: self.ph,
            pw: self.pw,
        }
    }

    pub fn input_dims(&self) -> [usize; 4] {
        [self.n, self.ih, self.iw, self.ic]
    }

    pub fn output_dims(&self) -> [usize; 4] {
        [self.n, self.oh, self.ow, self.oc]
    }

    pub fn filter_dims(&self) -> [usize; 4] {
        [self.oc, self.fh, self.fw, self.ic]
    }

    /// Extents of the output gradient after zero insertion:
    /// `O_H + (O_H - 1)(sh - 1)` by `O_W + (O_W - 1)(sw - 1)`.
    pub fn inserted_output_hw(&self) -> (usize, usize) {
        (
            self.oh + (self.oh - 1) * (self.sh - 1),
            self.ow + (self.ow - 1) * (self.sw - 1),
        )
    }

    /// Proportion of padded zeros in the padded input:
    /// `1 - (I_H * I_W) / ((I_H + 2*ph) * (I_W + 2*pw))`.
    ///
    /// Grows as the feature map shrinks under fixed padding, which is why
    /// filter trimming matters most in deep layers.
    pub fn pad_zero_fraction(&self) -> f64 {
        let dense = (self.ih * self.iw) as f64;
        let padded = ((self.ih + 2 * self.ph) * (self.iw + 2 * self.pw)) as f64;
        1.0 - dense / padded
    }

    /// Fraction of non-zero multiply-accumulates in zero-inserted
    /// deconvolution / dilated convolution:
    /// `(O_H * O_W) / (O_H^p * O_W^p)`. Equals 1 at unit stride and decays
    /// toward `1 / (sh * sw)` as the output grows.
    pub fn nonzero_calc_fraction(&self) -> f64 {
        let (ohp, owp) = self.inserted_output_hw();
        (self.oh * self.ow) as f64 / (ohp * owp) as f64
    }

    /// Multiply-accumulate count of the brute-force operator (padded and
    /// inserted zeros included).
    pub fn oracle_macs(&self, op: OpKind) -> u64 {
        let [n, ih, iw, ic] = [self.n, self.ih, self.iw, self.ic].map(|v| v as u64);
        let [oc, fh, fw] = [self.oc, self.fh, self.fw].map(|v| v as u64);
        let [oh, ow] = [self.oh, self.ow].map(|v| v as u64);
        match op {
            OpKind::Conv => oc * n * oh * ow * fh * fw * ic,
            OpKind::Deconv => ic * n * ih * iw * fh * fw * oc,
            OpKind::Dilated => {
                let (ohp, owp) = self.inserted_output_hw();
                oc * fh * fw * ic * ohp as u64 * owp as u64 * n
            }
        }
    }

    /// Analytic time complexity in flops (2 per multiply-accumulate).
    ///
    /// The dilated formula includes the batch factor `N` so instrumented
    /// MAC counts match it on every geometry; see [`Self::flops_per_image`]
    /// for the per-image reading without `N`.
    pub fn flops(&self, op: OpKind) -> u64 {
        2 * self.oracle_macs(op)
    }

    /// The dilated-convolution complexity normalized per image
    /// (`2 * O_C * F_H * F_W * I_C * O_H^p * O_W^p`); for the other two
    /// operators identical to [`Self::flops`]. Reports carry both
    /// readings.
    pub fn flops_per_image(&self, op: OpKind) -> u64 {
        match op {
            OpKind::Dilated => self.flops(op) / self.n as u64,
            _ => self.flops(op),
        }
    }

    pub(crate) fn check_input<S: Scalar>(&self, x: &Tensor4<S>) -> Result<()> {
        if x.dims() != self.input_dims() {
            return Err(Error::Shape(format!(
                "input dims {:?} do not match geometry {:?}",
                x.dims(),
                self.input_dims()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_filters<S: Scalar>(&self, w: &Tensor4<S>) -> Result<()> {
        if w.dims() != self.filter_dims() {
            return Err(Error::Shape(format!(
                "filter dims {:?} do not match geometry {:?}",
                w.dims(),
                self.filter_dims()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_output<S: Scalar>(&self, dy: &Tensor4<S>) -> Result<()> {
        if dy.dims() != self.output_dims() {
            return Err(Error::Shape(format!(
                "output dims {:?} do not match geometry {:?}",
                dy.dims(),
                self.output_dims()
            )));
        }
        Ok(())
    }
}

/// Bounds for the segment count of the partitioned reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GzPolicy {
    pub lower_bound: usize,
    pub upper_bound: usize,
}

impl GzPolicy {
    /// `[1, workers]`; the upper bound tracks the parallel width of the
    /// runtime.
    pub fn with_workers(workers: usize) -> Self {
        GzPolicy {
            lower_bound: 1,
            upper_bound: workers.max(1),
        }
    }
}

/// Picks the segment count for the partitioned reduction:
/// `clamp(round((n_alpha + n_beta) / n_gamma), lower, upper)`.
///
/// `n_alpha` / `n_beta` are the parallel block counts of the sibling
/// convolution and deconvolution, `n_gamma` that of the dilated operator
/// itself; the ratio grows with the feature-map size, which is exactly
/// when the dilated reduction needs more segments.
pub fn select_gz(n_alpha: u64, n_beta: u64, n_gamma: u64, policy: GzPolicy) -> usize {
    debug_assert!(n_alpha > 0 && n_beta > 0 && n_gamma > 0);
    // round(a/g) half-up in integer arithmetic
    let rounded = (2 * (n_alpha + n_beta) + n_gamma) / (2 * n_gamma);
    (rounded as usize).clamp(policy.lower_bound, policy.upper_bound)
}
