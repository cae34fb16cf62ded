//! Forward convolution with per-patch filter trimming.

use crate::error::Result;
use crate::geometry::{ConvGeometry, OpKind};
use crate::scalar::Scalar;
use crate::stats::OpStats;
use crate::tensor::Tensor4;
use crate::util::chunk_sweep;

/// Convolution with trimmed filters.
///
/// For every output position the filter loop bounds are clamped to the
/// part of the patch that overlaps the real input, so padded border zeros
/// are never touched and no padded tensor is materialized:
///
/// ```text
/// (ih_s, iw_s) = (oh*sh - ph, ow*sw - pw)
/// fh in [max(-ih_s, 0), min(I_H - ih_s, F_H))   and likewise for fw
/// ```
///
/// The hoisted bounds also remove every per-element range check from the
/// inner loop. Equals [`crate::oracle::naive_conv2d`] exactly in 64-bit
/// mode; `stats.macs` drops below the oracle count whenever padding is
/// present.
pub fn conv_v2<S: Scalar>(
    x: &Tensor4<S>,
    w: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    g.check_input(x)?;
    g.check_filters(w)?;
    let (ih_n, iw_n, ic_n) = (g.ih(), g.iw(), g.ic());
    let (fh_n, fw_n, oc_n) = (g.fh(), g.fw(), g.oc());
    let (oh_n, ow_n) = (g.oh(), g.ow());
    let (sh, sw) = (g.sh(), g.sw());
    let (ph, pw) = (g.ph() as i64, g.pw() as i64);

    let mut y = Tensor4::zeros(g.output_dims());
    let row = ow_n * oc_n;
    let macs = chunk_sweep(y.data_mut(), row, |r, out| {
        let n = r / oh_n;
        let oh = r % oh_n;
        let ih_s = (oh * sh) as i64 - ph;
        let fh_s = (-ih_s).max(0) as usize;
        let fh_e = (ih_n as i64 - ih_s).min(fh_n as i64) as usize;
        let mut macs = 0u64;
        for ow in 0..ow_n {
            let iw_s = (ow * sw) as i64 - pw;
            let fw_s = (-iw_s).max(0) as usize;
            let fw_e = (iw_n as i64 - iw_s).min(fw_n as i64) as usize;
            for oc in 0..oc_n {
                let mut acc = S::ZERO;
                for fh in fh_s..fh_e {
                    let ih = (ih_s + fh as i64) as usize;
                    for fw in fw_s..fw_e {
                        let iw = (iw_s + fw as i64) as usize;
                        for ic in 0..ic_n {
                            acc += x.data()[x.offset([n, ih, iw, ic])]
                                * w.data()[w.offset([oc, fh, fw, ic])];
                        }
                    }
                }
                out[ow * oc_n + oc] = acc;
            }
            macs += ((fh_e - fh_s) * (fw_e - fw_s) * ic_n * oc_n) as u64;
        }
        macs
    });
    let oracle = g.oracle_macs(OpKind::Conv);
    Ok((y, OpStats::new(macs, oracle - macs)))
}

/// Direct convolution, the common approach: full filter loops with a
/// per-tap range check standing in for the padded zeros. Same values as
/// the oracle and the same MAC count (the checked taps are still loop
/// trips); used by the dispatcher when padding is too small for trimming
/// to pay off.
pub fn conv_common<S: Scalar>(
    x: &Tensor4<S>,
    w: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<(Tensor4<S>, OpStats)> {
    g.check_input(x)?;
    g.check_filters(w)?;
    let (ih_n, iw_n, ic_n) = (g.ih(), g.iw(), g.ic());
    let (fh_n, fw_n, oc_n) = (g.fh(), g.fw(), g.oc());
    let (oh_n, ow_n) = (g.oh(), g.ow());
    let (sh, sw) = (g.sh(), g.sw());
    let (ph, pw) = (g.ph() as i64, g.pw() as i64);

    let mut y = Tensor4::zeros(g.output_dims());
    let row = ow_n * oc_n;
    let macs = chunk_sweep(y.data_mut(), row, |r, out| {
        let n = r / oh_n;
        let oh = r % oh_n;
        let ih_s = (oh * sh) as i64 - ph;
        for ow in 0..ow_n {
            let iw_s = (ow * sw) as i64 - pw;
            for oc in 0..oc_n {
                let mut acc = S::ZERO;
                for fh in 0..fh_n {
                    let ih = ih_s + fh as i64;
                    let h_ok = ih >= 0 && ih < ih_n as i64;
                    for fw in 0..fw_n {
                        let iw = iw_s + fw as i64;
                        if !h_ok || iw < 0 || iw >= iw_n as i64 {
                            continue;
                        }
                        for ic in 0..ic_n {
                            acc += x.data()[x.offset([n, ih as usize, iw as usize, ic])]
                                * w.data()[w.offset([oc, fh, fw, ic])];
                        }
                    }
                }
                out[ow * oc_n + oc] = acc;
            }
        }
        (ow_n * oc_n * fh_n * fw_n * ic_n) as u64
    });
    Ok((y, OpStats::new(macs, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySpec;
    use crate::oracle::naive_conv2d;
    use crate::rng::SplitMix64;
    use alloc::vec;

    fn fig4_geometry() -> ConvGeometry {
        GeometrySpec {
            n: 1,
            ih: 5,
            iw: 5,
            ic: 1,
            oc: 1,
            fh: 3,
            fw: 3,
            sh: 3,
            sw: 3,
            ph: 1,
            pw: 1,
        }
        .infer()
        .unwrap()
    }

    #[test]
    fn trimmed_baseline_counts() {
        // Worked example: trimmed convolution does 25 MACs (50 flops)
        // against the dense 36 MACs (72 flops).
        let g = fig4_geometry();
        let mut rng = SplitMix64::new(3);
        let mut x = Tensor4::<f64>::zeros(g.input_dims());
        let mut w = Tensor4::<f64>::zeros(g.filter_dims());
        x.fill_uniform(&mut rng, -1.0, 1.0);
        w.fill_uniform(&mut rng, -1.0, 1.0);

        let (y, stats) = conv_v2::<f64>(&x, &w, &g).unwrap();
        assert_eq!(stats.macs, 25);
        assert_eq!(stats.flops(), 50);
        assert_eq!(stats.oracle_macs(), 36);

        let (expect, naive_stats) = naive_conv2d(&x, &w, &g).unwrap();
        assert_eq!(naive_stats.flops(), 72);
        assert_eq!(y.data(), expect.data());
    }

    #[test]
    fn no_padding_means_nothing_to_trim() {
        let g = GeometrySpec {
            n: 2,
            ih: 6,
            iw: 5,
            ic: 3,
            oc: 2,
            fh: 3,
            fw: 2,
            sh: 2,
            sw: 1,
            ph: 0,
            pw: 0,
        }
        .infer()
        .unwrap();
        let mut rng = SplitMix64::new(11);
        let mut x = Tensor4::<f64>::zeros(g.input_dims());
        let mut w = Tensor4::<f64>::zeros(g.filter_dims());
        x.fill_uniform(&mut rng, -1.0, 1.0);
        w.fill_uniform(&mut rng, -1.0, 1.0);

        let (_, naive_stats) = naive_conv2d(&x, &w, &g).unwrap();
        let (_, v2_stats) = conv_v2(&x, &w, &g).unwrap();
        assert_eq!(v2_stats, naive_stats);
        assert_eq!(v2_stats.zeros_skipped, 0);
    }

    #[test]
    fn hand_case_values() {
        let g = GeometrySpec {
            n: 1,
            ih: 4,
            iw: 1,
            ic: 1,
            oc: 1,
            fh: 2,
            fw: 1,
            sh: 2,
            sw: 1,
            ph: 0,
            pw: 0,
        }
        .infer()
        .unwrap();
        let x = Tensor4::from_vec([1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor4::from_vec([1, 2, 1, 1], vec![2.0, 3.0]).unwrap();
        let (y, _) = conv_v2(&x, &w, &g).unwrap();
        assert_eq!(y.data(), &[8.0, 18.0]);
        let (y, _) = conv_common(&x, &w, &g).unwrap();
        assert_eq!(y.data(), &[8.0, 18.0]);
    }

    #[test]
    fn common_counts_every_tap() {
        let g = fig4_geometry();
        let x = Tensor4::from_fn(g.input_dims(), |i| i[1] as f64 - i[2] as f64);
        let w = Tensor4::from_fn(g.filter_dims(), |i| 0.5 + i[3] as f64);
        let (y, stats) = conv_common(&x, &w, &g).unwrap();
        let (expect, naive_stats) = naive_conv2d(&x, &w, &g).unwrap();
        assert_eq!(stats.macs, naive_stats.macs);
        assert_eq!(y.data(), expect.data());
    }
}
