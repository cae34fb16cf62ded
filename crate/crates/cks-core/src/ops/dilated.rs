//! Filter-gradient operator that skips inserted zeros by leaping access.
//!
//! In the backward pass the output gradient acts as a filter with
//! `stride - 1` zeros logically inserted between its elements. Instead of
//! materializing that sparse tensor, these kernels read the input with a
//! step size equal to the stride: only positions that line up with real
//! output-gradient elements are ever touched.

use crate::error::Result;
use crate::geometry::{ConvGeometry, OpKind};
use crate::scalar::Scalar;
use crate::stats::OpStats;
use crate::tensor::Tensor4;
use crate::util::{ceil_div, chunk_sweep};

/// Output-gradient index range `[lo, hi)` with
/// `0 <= start + t*stride < limit`, clamped to `extent`.
#[inline]
fn leap_range(start: i64, stride: usize, limit: usize, extent: usize) -> (usize, usize) {
    let s = stride as i64;
    let lo = ceil_div(-start, s).max(0);
    let hi = ceil_div(limit as i64 - start, s).min(extent as i64);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

fn sk_dilated_impl<S: Scalar>(
    x: &Tensor4<S>,
    dy: &Tensor4<S>,
    g: &ConvGeometry,
    trimmed: bool,
) -> Result<(Tensor4<S>, OpStats)> {
    g.check_input(x)?;
    g.check_output(dy)?;
    let (n_n, ih_n, iw_n, ic_n) = (g.n(), g.ih(), g.iw(), g.ic());
    let (fh_n, fw_n) = (g.fh(), g.fw());
    let (oh_n, ow_n) = (g.oh(), g.ow());
    let (sh, sw) = (g.sh(), g.sw());
    let (ph, pw) = (g.ph() as i64, g.pw() as i64);

    let mut dw = Tensor4::zeros(g.filter_dims());
    let chunk = fh_n * fw_n * ic_n;
    let macs = chunk_sweep(dw.data_mut(), chunk, |oc, out| {
        let mut macs = 0u64;
        for fh in 0..fh_n {
            let ih_s = fh as i64 - ph;
            let (oh_lo, oh_hi) = if trimmed {
                leap_range(ih_s, sh, ih_n, oh_n)
            } else {
                (0, oh_n)
            };
            for fw in 0..fw_n {
                let iw_s = fw as i64 - pw;
                let (ow_lo, ow_hi) = if trimmed {
                    leap_range(iw_s, sw, iw_n, ow_n)
                } else {
                    (0, ow_n)
                };
                for ic in 0..ic_n {
                    let mut acc = S::ZERO;
                    if trimmed {
                        for n in 0..n_n {
                            for oh in oh_lo..oh_hi {
                                let ih = (oh as i64 * sh as i64 + ih_s) as usize;
                                for ow in ow_lo..ow_hi {
                                    let iw = (ow as i64 * sw as i64 + iw_s) as usize;
                                    acc += x.data()[x.offset([n, ih, iw, ic])]
                                        * dy.data()[dy.offset([n, oh, ow, oc])];
                                }
                            }
                        }
                    } else {
                        for n in 0..n_n {
                            for oh in 0..oh_n {
                                let ih = oh as i64 * sh as i64 + ih_s;
                                let h_ok = ih >= 0 && ih < ih_n as i64;
                                for ow in 0..ow_n {
                                    let iw = ow as i64 * sw as i64 + iw_s;
                                    if !h_ok || iw < 0 || iw >= iw_n as i64 {
                                        continue;
                                    }
                                    acc += x.data()[x.offset([n, ih as usize, iw as usize, ic])]
                                        * dy.data()[dy.offset([n, oh, ow, oc])];
                                }
                            }
                        }
                    }
                    out[(fh * fw_n + fw) * ic_n + ic] = acc;
                }
                let trips = if trimmed {
                    (oh_hi - oh_lo) * (ow_hi - ow_lo)
                } else {
                    oh_n * ow_n
                };
                macs += (n_n * trips * ic_n) as u64;
            }
        }
        macs
    });
    let oracle = g.oracle_macs(OpKind::Dilated);
    Ok((dw, OpStats::new(macs, oracle - macs)))
}

/// Dilated convolution with leaping access.
///
/// No zero-inserted filter tensor is ever built, so the MAC count is
/// exactly `nonzero_calc_fraction` times the dense oracle's on every
/// geometry. A per-position range check still stands in for the padded
/// border of the input.
pub fn sk_dilated<S: Scalar>(
    x: &Tensor4<S>,
    dy: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    sk_dilated_impl(x, dy, g, false)
}

/// Leaping access with filter trimming: the range check is hoisted into
/// precomputed per-tap loop bounds
///
/// ```text
/// oh in [max(ceil(-ih_s/sh), 0), min(O_H, ceil((I_H - ih_s)/sh)))
/// ```
///
/// so padded border zeros are excluded as well. Values are identical to
/// [`sk_dilated`]; the MAC count is strictly smaller whenever padding is
/// present.
pub fn sk_dilated_v2<S: Scalar>(
    x: &Tensor4<S>,
    dy: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    sk_dilated_impl(x, dy, g, true)
}
