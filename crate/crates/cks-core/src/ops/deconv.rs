//! Stages 2&3 of kernel-split deconvolution, fused.
//!
//! Each sub-kernel `(y, x)` performs a unit-stride convolution with the
//! output gradient (stage 2) and writes its results directly into the
//! residue class `ih = y - ph (mod sh)`, `iw = x - pw (mod sw)` of the
//! input gradient (stage 3). Every input-gradient element belongs to
//! exactly one sub-kernel, so the composition needs no synchronization
//! and no element is written twice.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{ConvGeometry, OpKind};
use crate::scalar::Scalar;
use crate::stats::OpStats;
use crate::tensor::Tensor4;
use crate::util::{ceil_div, chunk_sweep};

use super::split::{split_extent, KernelSplit};

/// Per-sub-kernel execution parameters, shared by the kernels and the
/// per-split MAC accounting so both always agree.
struct SplitPlan {
    y: usize,
    x: usize,
    /// Sub-kernel extents `CH[y,x]`, `CW[y,x]`.
    ch_n: usize,
    cw_n: usize,
    /// Stage-2 zero padding `(oph, opw) = (CH - 1, CW - 1)`.
    oph: i64,
    opw: i64,
    /// First input-gradient coordinate of this residue class, already
    /// adjusted to be non-negative.
    ih_start: usize,
    iw_start: usize,
}

fn split_plans(g: &ConvGeometry) -> Vec<SplitPlan> {
    let mut plans = Vec::new();
    for y in 0..g.sh() {
        let ch_n = split_extent(g.fh(), g.sh(), y);
        if ch_n == 0 {
            continue; // residue class without filter taps
        }
        let mut ih_start = y as i64 - g.ph() as i64;
        if ih_start < 0 {
            ih_start += ceil_div(-ih_start, g.sh() as i64) * g.sh() as i64;
        }
        for x in 0..g.sw() {
            let cw_n = split_extent(g.fw(), g.sw(), x);
            if cw_n == 0 {
                continue;
            }
            let mut iw_start = x as i64 - g.pw() as i64;
            if iw_start < 0 {
                iw_start += ceil_div(-iw_start, g.sw() as i64) * g.sw() as i64;
            }
            plans.push(SplitPlan {
                y,
                x,
                ch_n,
                cw_n,
                oph: ch_n as i64 - 1,
                opw: cw_n as i64 - 1,
                ih_start: ih_start as usize,
                iw_start: iw_start as usize,
            });
        }
    }
    plans
}

/// Slot range `[lo, hi)` with `0 <= base + slot < limit`, clamped to the
/// sub-kernel extent. Empty ranges come back as `(0, 0)`.
#[inline]
fn trim_range(base: i64, extent: usize, limit: usize) -> (usize, usize) {
    let lo = (-base).max(0);
    let hi = (limit as i64 - base).min(extent as i64);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

fn ks_deconv_impl<S: Scalar>(
    dy: &Tensor4<S>,
    ks: &KernelSplit<S>,
    g: &ConvGeometry,
    trimmed: bool,
) -> Result<(Tensor4<S>, OpStats)> {
    g.check_output(dy)?;
    ks.require_match(g)?;
    let plans = split_plans(g);
    let c = ks.tensor();
    let (ih_n, iw_n, ic_n) = (g.ih(), g.iw(), g.ic());
    let (oh_n, ow_n, oc_n) = (g.oh(), g.ow(), g.oc());
    let (sh, sw) = (g.sh(), g.sw());
    let (ph, pw) = (g.ph(), g.pw());
    let u_max = ih_n.div_ceil(sh);
    let v_max = iw_n.div_ceil(sw);

    let mut dx = Tensor4::zeros(g.input_dims());
    let sample_len = ih_n * iw_n * ic_n;
    let macs = chunk_sweep(dx.data_mut(), sample_len, |n, out| {
        let mut macs = 0u64;
        for p in &plans {
            for u in 0..u_max {
                let ih = p.ih_start + u * sh;
                if ih >= ih_n {
                    continue;
                }
                // Exact by construction: ih lies in the residue class of
                // y - ph modulo the stride.
                debug_assert_eq!((ih + ph - p.y) % sh, 0);
                let oh_base = ((ih + ph - p.y) / sh) as i64 - p.oph;
                let (ch_lo, ch_hi) = if trimmed {
                    trim_range(oh_base, p.ch_n, oh_n)
                } else {
                    (0, p.ch_n)
                };
                for v in 0..v_max {
                    let iw = p.iw_start + v * sw;
                    if iw >= iw_n {
                        continue;
                    }
                    let ow_base = ((iw + pw - p.x) / sw) as i64 - p.opw;
                    let (cw_lo, cw_hi) = if trimmed {
                        trim_range(ow_base, p.cw_n, ow_n)
                    } else {
                        (0, p.cw_n)
                    };
                    for ic in 0..ic_n {
                        let mut acc = S::ZERO;
                        if trimmed {
                            for ch in ch_lo..ch_hi {
                                let oh = (oh_base + ch as i64) as usize;
                                for cw in cw_lo..cw_hi {
                                    let ow = (ow_base + cw as i64) as usize;
                                    for oc in 0..oc_n {
                                        acc += dy.data()[dy.offset([n, oh, ow, oc])]
                                            * c.data()[c.offset([p.y, p.x, oc, ch, cw, ic])];
                                    }
                                }
                            }
                        } else {
                            for ch in 0..p.ch_n {
                                let oh = oh_base + ch as i64;
                                let h_ok = oh >= 0 && oh < oh_n as i64;
                                for cw in 0..p.cw_n {
                                    let ow = ow_base + cw as i64;
                                    if !h_ok || ow < 0 || ow >= ow_n as i64 {
                                        continue;
                                    }
                                    for oc in 0..oc_n {
                                        acc += dy.data()
                                            [dy.offset([n, oh as usize, ow as usize, oc])]
                                            * c.data()[c.offset([p.y, p.x, oc, ch, cw, ic])];
                                    }
                                }
                            }
                        }
                        out[(ih * iw_n + iw) * ic_n + ic] = acc;
                    }
                    let taps = if trimmed {
                        (ch_hi - ch_lo) * (cw_hi - cw_lo)
                    } else {
                        p.ch_n * p.cw_n
                    };
                    macs += (taps * oc_n * ic_n) as u64;
                }
            }
        }
        macs
    });
    let oracle = g.oracle_macs(OpKind::Deconv);
    Ok((dx, OpStats::new(macs, oracle - macs)))
}

/// Kernel-split deconvolution.
///
/// The inner loop carries a per-position range check on the output
/// gradient, so its trip count (and so the reported MAC count) is the full
/// `CH * CW * O_C` per covered input cell: `1/(sh*sw)` of the dense
/// sparse-tensor cost, exactly so when the input extents are integral
/// multiples of the stride.
pub fn ks_deconv<S: Scalar>(
    dy: &Tensor4<S>,
    ks: &KernelSplit<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    ks_deconv_impl(dy, ks, g, false)
}

/// Kernel-split deconvolution with filter trimming in stage 2: the range
/// check is hoisted into per-position slot bounds, dropping every loop
/// trip that a sub-kernel convolution would spend on its own zero-padding
/// border. Values are identical to [`ks_deconv`]; the MAC count is never
/// larger and strictly smaller whenever a sub-kernel touches its padding.
pub fn ks_deconv_v2<S: Scalar>(
    dy: &Tensor4<S>,
    ks: &KernelSplit<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    ks_deconv_impl(dy, ks, g, true)
}

/// Stage-2 loop-trip counts per sub-kernel, row-major over `(y, x)`,
/// computed with the same bounds arithmetic as the kernels. Empty residue
/// classes report 0. Summing the vector gives the corresponding
/// operator's `stats.macs`.
pub fn ks_deconv_split_macs(g: &ConvGeometry, trimmed: bool) -> Vec<u64> {
    let mut counts = vec![0u64; g.sh() * g.sw()];
    let (sh, sw) = (g.sh(), g.sw());
    for p in &split_plans(g) {
        let mut sum_h = 0u64;
        for u in 0..g.ih().div_ceil(sh) {
            let ih = p.ih_start + u * sh;
            if ih >= g.ih() {
                continue;
            }
            let oh_base = ((ih + g.ph() - p.y) / sh) as i64 - p.oph;
            sum_h += if trimmed {
                let (lo, hi) = trim_range(oh_base, p.ch_n, g.oh());
                (hi - lo) as u64
            } else {
                p.ch_n as u64
            };
        }
        let mut sum_w = 0u64;
        for v in 0..g.iw().div_ceil(sw) {
            let iw = p.iw_start + v * sw;
            if iw >= g.iw() {
                continue;
            }
            let ow_base = ((iw + g.pw() - p.x) / sw) as i64 - p.opw;
            sum_w += if trimmed {
                let (lo, hi) = trim_range(ow_base, p.cw_n, g.ow());
                (hi - lo) as u64
            } else {
                p.cw_n as u64
            };
        }
        counts[p.y * sw + p.x] = sum_h * sum_w * (g.oc() * g.ic() * g.n()) as u64;
    }
    counts
}

/// Direct deconvolution for unit stride, where the input gradient is a
/// plain full correlation of the output gradient with the rotated filter
/// and nothing is inserted. The dispatcher prefers this over the split
/// path at stride 1. MAC count equals the dense oracle's.
pub fn deconv_common_unit_stride<S: Scalar>(
    dy: &Tensor4<S>,
    w: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    if g.sh() != 1 || g.sw() != 1 {
        return Err(Error::Parameter(alloc::format!(
            "unit-stride deconvolution called with stride ({}, {})",
            g.sh(),
            g.sw()
        )));
    }
    g.check_output(dy)?;
    g.check_filters(w)?;
    let (ih_n, iw_n, ic_n) = (g.ih(), g.iw(), g.ic());
    let (fh_n, fw_n, oc_n) = (g.fh(), g.fw(), g.oc());
    let (oh_n, ow_n) = (g.oh(), g.ow());
    let (ph, pw) = (g.ph() as i64, g.pw() as i64);
    let top = fh_n as i64 - 1 - ph;
    let left = fw_n as i64 - 1 - pw;

    let mut dx = Tensor4::zeros(g.input_dims());
    let row = iw_n * ic_n;
    let macs = chunk_sweep(dx.data_mut(), row, |r, out| {
        let n = r / ih_n;
        let ih = r % ih_n;
        for iw in 0..iw_n {
            for ic in 0..ic_n {
                let mut acc = S::ZERO;
                for fh in 0..fh_n {
                    let oh = ih as i64 + fh as i64 - top;
                    let h_ok = oh >= 0 && oh < oh_n as i64;
                    for fw in 0..fw_n {
                        let ow = iw as i64 + fw as i64 - left;
                        if !h_ok || ow < 0 || ow >= ow_n as i64 {
                            continue;
                        }
                        for oc in 0..oc_n {
                            acc += dy.data()[dy.offset([n, oh as usize, ow as usize, oc])]
                                * w.data()[w.offset([oc, fh_n - 1 - fh, fw_n - 1 - fw, ic])];
                        }
                    }
                }
                out[iw * ic_n + ic] = acc;
            }
        }
        (iw_n * ic_n * fh_n * fw_n * oc_n) as u64
    });
    let oracle = g.oracle_macs(OpKind::Deconv);
    debug_assert_eq!(macs, oracle);
    Ok((dx, OpStats::new(macs, 0)))
}
