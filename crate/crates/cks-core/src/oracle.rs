//! Brute-force reference operators.
//!
//! These materialize the padded input and the zero-inserted output
//! gradient exactly the way the textbook formulation does, and count
//! every multiply-accumulate including the ones on structural zeros.
//! They are the ground truth for every equivalence test in the crate:
//! clarity over speed, fixed accumulation order, never parallel.
//!
//! Accumulation order per output element is lexicographic over the
//! reduction indices (conv: `fh, fw, ic`; deconv in the convolution view:
//! `fh, fw, oc`; dilated: `n, oh, ow`). The zero-skipping operators visit
//! the same non-zero terms in the same order, so 64-bit results agree
//! exactly, not just within tolerance.

use crate::error::Result;
use crate::geometry::ConvGeometry;
use crate::scalar::Scalar;
use crate::stats::OpStats;
use crate::tensor::{rot180, zero_insert_hw, zero_pad_hw, zero_pad_hw_asym, Tensor4};

/// Forward convolution over the materialized zero-padded input.
///
/// `Y[n,oh,ow,oc] = sum_{fh,fw,ic} Xpad[n, oh*sh+fh, ow*sw+fw, ic] * W[oc,fh,fw,ic]`
pub fn naive_conv2d<S: Scalar>(
    x: &Tensor4<S>,
    w: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    g.check_input(x)?;
    g.check_filters(w)?;
    let xp = zero_pad_hw(x, g.ph(), g.pw());
    let mut y = Tensor4::zeros(g.output_dims());
    let mut macs = 0u64;
    for n in 0..g.n() {
        for oh in 0..g.oh() {
            for ow in 0..g.ow() {
                for oc in 0..g.oc() {
                    let mut acc = S::ZERO;
                    for fh in 0..g.fh() {
                        for fw in 0..g.fw() {
                            for ic in 0..g.ic() {
                                let xv = xp.data()
                                    [xp.offset([n, oh * g.sh() + fh, ow * g.sw() + fw, ic])];
                                let wv = w.data()[w.offset([oc, fh, fw, ic])];
                                acc += xv * wv;
                                macs += 1;
                            }
                        }
                    }
                    let o = y.offset([n, oh, ow, oc]);
                    y.data_mut()[o] = acc;
                }
            }
        }
    }
    Ok((y, OpStats::new(macs, 0)))
}

/// Input gradient via the sparse formulation: the output gradient is
/// zero-inserted, padded by `(F_H - 1 - ph, F_W - 1 - pw)` (plus the
/// stride remainder on the bottom/right so the stored input extent is
/// recovered), and convolved at unit stride with the rotated filters.
///
/// The MAC counter covers every term, inserted zeros included, so the
/// stats reflect the cost of the dense sparse-tensor approach.
pub fn naive_deconv2d<S: Scalar>(
    dy: &Tensor4<S>,
    w: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    g.check_output(dy)?;
    g.check_filters(w)?;
    let rem_h = (g.ih() + 2 * g.ph() - g.fh()) % g.sh();
    let rem_w = (g.iw() + 2 * g.pw() - g.fw()) % g.sw();
    let top = g.fh() - 1 - g.ph();
    let left = g.fw() - 1 - g.pw();
    let z = zero_insert_hw(dy, g.sh(), g.sw());
    let zp = zero_pad_hw_asym(&z, top, top + rem_h, left, left + rem_w);
    let wr = rot180(w);

    let mut dx = Tensor4::zeros(g.input_dims());
    let mut macs = 0u64;
    for n in 0..g.n() {
        for ih in 0..g.ih() {
            for iw in 0..g.iw() {
                for ic in 0..g.ic() {
                    let mut acc = S::ZERO;
                    for fh in 0..g.fh() {
                        for fw in 0..g.fw() {
                            for oc in 0..g.oc() {
                                let zv = zp.data()[zp.offset([n, ih + fh, iw + fw, oc])];
                                let wv = wr.data()[wr.offset([oc, fh, fw, ic])];
                                acc += zv * wv;
                                macs += 1;
                            }
                        }
                    }
                    let o = dx.offset([n, ih, iw, ic]);
                    dx.data_mut()[o] = acc;
                }
            }
        }
    }
    Ok((dx, OpStats::new(macs, 0)))
}

/// Input gradient as the exact adjoint of [`naive_conv2d`], scattered
/// straight from the forward loop. Referee for the sparse form above;
/// the two agree exactly in 64-bit mode.
pub fn naive_deconv2d_scatter<S: Scalar>(
    dy: &Tensor4<S>,
    w: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<Tensor4<S>> {
    g.check_output(dy)?;
    g.check_filters(w)?;
    let mut dx = Tensor4::zeros(g.input_dims());
    for n in 0..g.n() {
        for oh in 0..g.oh() {
            for ow in 0..g.ow() {
                for oc in 0..g.oc() {
                    let dyv = dy.data()[dy.offset([n, oh, ow, oc])];
                    for fh in 0..g.fh() {
                        let ih = (oh * g.sh() + fh) as i64 - g.ph() as i64;
                        if ih < 0 || ih >= g.ih() as i64 {
                            continue;
                        }
                        for fw in 0..g.fw() {
                            let iw = (ow * g.sw() + fw) as i64 - g.pw() as i64;
                            if iw < 0 || iw >= g.iw() as i64 {
                                continue;
                            }
                            for ic in 0..g.ic() {
                                let wv = w.data()[w.offset([oc, fh, fw, ic])];
                                let o = dx.offset([n, ih as usize, iw as usize, ic]);
                                dx.data_mut()[o] += dyv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Filter gradient via the sparse formulation: the zero-inserted output
/// gradient acts as a filter sliding over the materialized padded input.
///
/// `dW[oc,fh,fw,ic] = sum_{n,qh,qw} Xpad[n, fh+qh, fw+qw, ic] * Zins[n,qh,qw,oc]`
pub fn naive_dilated_conv2d<S: Scalar>(
    x: &Tensor4<S>,
    dy: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    g.check_input(x)?;
    g.check_output(dy)?;
    let xp = zero_pad_hw(x, g.ph(), g.pw());
    let z = zero_insert_hw(dy, g.sh(), g.sw());
    let (ohp, owp) = g.inserted_output_hw();

    let mut dw = Tensor4::zeros(g.filter_dims());
    let mut macs = 0u64;
    for oc in 0..g.oc() {
        for fh in 0..g.fh() {
            for fw in 0..g.fw() {
                for ic in 0..g.ic() {
                    let mut acc = S::ZERO;
                    for n in 0..g.n() {
                        for qh in 0..ohp {
                            for qw in 0..owp {
                                let xv = xp.data()[xp.offset([n, fh + qh, fw + qw, ic])];
                                let zv = z.data()[z.offset([n, qh, qw, oc])];
                                acc += xv * zv;
                                macs += 1;
                            }
                        }
                    }
                    let o = dw.offset([oc, fh, fw, ic]);
                    dw.data_mut()[o] = acc;
                }
            }
        }
    }
    Ok((dw, OpStats::new(macs, 0)))
}
