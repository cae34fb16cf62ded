//! Matrix views of the operators: im2col lowering of the forward
//! convolution and the segmented reduction of the filter gradient.
//!
//! This backend exists to validate the lowering, not to win benchmarks:
//! the multiply is a plain blocked triple loop, and patch matrices are
//! materialized explicitly.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{ConvGeometry, OpKind};
use crate::scalar::Scalar;
use crate::stats::OpStats;
use crate::tensor::Tensor4;
use crate::util::chunk_sweep;

/// Rows of the k-loop processed per pass of the blocked multiply. Term
/// order per output element stays ascending in k, so blocking never
/// changes results.
const K_BLOCK: usize = 64;

/// Unfolded input patches: row `r = (n*O_H + oh)*O_W + ow`, column
/// `(fh*F_W + fw)*I_C + ic`, value `Xpad[n, oh*sh + fh, ow*sw + fw, ic]`.
/// Padded positions are stored as explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix<S: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> PatchMatrix<S> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn at(&self, r: usize, c: usize) -> S {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }
}

/// Lowers the input to its patch matrix.
pub fn im2col<S: Scalar>(x: &Tensor4<S>, g: &ConvGeometry) -> Result<PatchMatrix<S>> {
    g.check_input(x)?;
    let rows = g.n() * g.oh() * g.ow();
    let cols = g.fh() * g.fw() * g.ic();
    let (ih_n, iw_n, ic_n) = (g.ih(), g.iw(), g.ic());
    let (oh_n, ow_n) = (g.oh(), g.ow());
    let (sh, sw) = (g.sh(), g.sw());
    let (ph, pw) = (g.ph() as i64, g.pw() as i64);

    let mut data = vec![S::ZERO; rows * cols];
    chunk_sweep(&mut data, cols, |r, row| {
        let ow = r % ow_n;
        let oh = (r / ow_n) % oh_n;
        let n = r / (ow_n * oh_n);
        let ih_s = (oh * sh) as i64 - ph;
        let iw_s = (ow * sw) as i64 - pw;
        for fh in 0..g.fh() {
            let ih = ih_s + fh as i64;
            let h_ok = ih >= 0 && ih < ih_n as i64;
            for fw in 0..g.fw() {
                let iw = iw_s + fw as i64;
                if !h_ok || iw < 0 || iw >= iw_n as i64 {
                    continue; // stays an explicit zero
                }
                let src = x.offset([n, ih as usize, iw as usize, 0]);
                let dst = (fh * g.fw() + fw) * ic_n;
                row[dst..dst + ic_n].copy_from_slice(&x.data()[src..src + ic_n]);
            }
        }
        0
    });
    Ok(PatchMatrix { rows, cols, data })
}

/// Reshapes filters `(O_C, F_H, F_W, I_C)` into a `(F_H*F_W*I_C) x O_C`
/// matrix matching the patch-matrix column order.
fn filter_matrix<S: Scalar>(w: &Tensor4<S>, g: &ConvGeometry) -> Vec<S> {
    let cols = g.fh() * g.fw() * g.ic();
    let mut m = vec![S::ZERO; cols * g.oc()];
    for oc in 0..g.oc() {
        for fh in 0..g.fh() {
            for fw in 0..g.fw() {
                for ic in 0..g.ic() {
                    let k = (fh * g.fw() + fw) * g.ic() + ic;
                    m[k * g.oc() + oc] = w.data()[w.offset([oc, fh, fw, ic])];
                }
            }
        }
    }
    m
}

/// Forward convolution as `im2col(x) x reshape(w)`.
///
/// The k loop runs ascending per output element (blocked in chunks of
/// `K_BLOCK`), which is the same term order as the direct oracle, so
/// 64-bit results agree exactly.
pub fn gemm_conv2d<S: Scalar>(
    x: &Tensor4<S>,
    w: &Tensor4<S>,
    g: &ConvGeometry,
) -> Result<Tensor4<S>> {
    g.check_filters(w)?;
    let patches = im2col(x, g)?;
    let wm = filter_matrix(w, g);
    let (ow_n, oc_n) = (g.ow(), g.oc());
    let cols = patches.cols();

    let mut y = Tensor4::zeros(g.output_dims());
    let row_len = ow_n * oc_n;
    chunk_sweep(y.data_mut(), row_len, |row_idx, out| {
        // one (n, oh) stripe of the output per chunk
        let r0 = row_idx * ow_n;
        for k0 in (0..cols).step_by(K_BLOCK) {
            let k1 = (k0 + K_BLOCK).min(cols);
            for ow in 0..ow_n {
                let patch = &patches.data()[(r0 + ow) * cols..(r0 + ow + 1) * cols];
                for oc in 0..oc_n {
                    let mut acc = out[ow * oc_n + oc];
                    for (k, &p) in patch.iter().enumerate().take(k1).skip(k0) {
                        acc += p * wm[k * oc_n + oc];
                    }
                    out[ow * oc_n + oc] = acc;
                }
            }
        }
        0
    });
    Ok(y)
}

/// How the per-segment partial results of [`partitioned_dilated`] are
/// aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Fold in ascending segment order. The deterministic default.
    Serial,
    /// Fixed pairwise tree over segment indices. Grouping depends only on
    /// the segment count, never on worker scheduling.
    Tree,
}

/// Filter gradient with the reduction axis `G_K = N*O_H*O_W` split into
/// `gz` near-equal contiguous segments, each computed independently with
/// leaping access, then aggregated. With `gz = 1` this is bit-identical
/// to [`crate::ops::sk_dilated`].
pub fn partitioned_dilated<S: Scalar>(
    x: &Tensor4<S>,
    dy: &Tensor4<S>,
    g: &ConvGeometry,
    gz: usize,
) -> Result<(Tensor4<S>, OpStats)> {
    partitioned_dilated_with(x, dy, g, gz, Reduction::Serial)
}

pub fn partitioned_dilated_with<S: Scalar>(
    x: &Tensor4<S>,
    dy: &Tensor4<S>,
    g: &ConvGeometry,
    gz: usize,
    reduction: Reduction,
) -> Result<(Tensor4<S>, OpStats)> {
    g.check_input(x)?;
    g.check_output(dy)?;
    let g_k = g.n() * g.oh() * g.ow();
    if gz == 0 || gz > g_k {
        return Err(Error::Parameter(alloc::format!(
            "segment count {gz} outside [1, {g_k}]"
        )));
    }

    let base = g_k / gz;
    let rem = g_k % gz;
    let segment = |s: usize| -> (usize, usize) {
        let start = s * base + s.min(rem);
        let len = base + usize::from(s < rem);
        (start, start + len)
    };

    let run_segment = |s: usize| -> Tensor4<S> {
        let (r_lo, r_hi) = segment(s);
        partial_dilated(x, dy, g, r_lo, r_hi)
    };

    #[cfg(feature = "parallel")]
    let mut partials: Vec<Tensor4<S>> = {
        use rayon::prelude::*;
        (0..gz).into_par_iter().map(run_segment).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut partials: Vec<Tensor4<S>> = (0..gz).map(run_segment).collect();

    let dw = match reduction {
        Reduction::Serial => {
            let mut acc = partials.remove(0);
            for p in &partials {
                add_assign(&mut acc, p);
            }
            acc
        }
        Reduction::Tree => {
            while partials.len() > 1 {
                let mut next = Vec::with_capacity(partials.len().div_ceil(2));
                let mut iter = partials.into_iter();
                while let Some(mut a) = iter.next() {
                    if let Some(b) = iter.next() {
                        add_assign(&mut a, &b);
                    }
                    next.push(a);
                }
                partials = next;
            }
            partials.remove(0)
        }
    };

    // Every reduction term is one loop trip regardless of segmentation.
    let macs = (g.oc() * g.fh() * g.fw() * g.ic() * g_k) as u64;
    let oracle = g.oracle_macs(OpKind::Dilated);
    Ok((dw, OpStats::new(macs, oracle - macs)))
}

/// Leaping-access filter gradient restricted to reduction rows
/// `[r_lo, r_hi)` of the flattened `(n, oh, ow)` axis.
fn partial_dilated<S: Scalar>(
    x: &Tensor4<S>,
    dy: &Tensor4<S>,
    g: &ConvGeometry,
    r_lo: usize,
    r_hi: usize,
) -> Tensor4<S> {
    let (ih_n, iw_n, ic_n) = (g.ih(), g.iw(), g.ic());
    let (fh_n, fw_n, oc_n) = (g.fh(), g.fw(), g.oc());
    let (oh_n, ow_n) = (g.oh(), g.ow());
    let (sh, sw) = (g.sh(), g.sw());
    let (ph, pw) = (g.ph() as i64, g.pw() as i64);

    let mut dw = Tensor4::zeros(g.filter_dims());
    for oc in 0..oc_n {
        for fh in 0..fh_n {
            let ih_s = fh as i64 - ph;
            for fw in 0..fw_n {
                let iw_s = fw as i64 - pw;
                for ic in 0..ic_n {
                    let mut acc = S::ZERO;
                    for r in r_lo..r_hi {
                        let ow = r % ow_n;
                        let oh = (r / ow_n) % oh_n;
                        let n = r / (ow_n * oh_n);
                        let ih = oh as i64 * sh as i64 + ih_s;
                        let iw = ow as i64 * sw as i64 + iw_s;
                        if ih < 0 || ih >= ih_n as i64 || iw < 0 || iw >= iw_n as i64 {
                            continue;
                        }
                        acc += x.data()[x.offset([n, ih as usize, iw as usize, ic])]
                            * dy.data()[dy.offset([n, oh, ow, oc])];
                    }
                    let o = dw.offset([oc, fh, fw, ic]);
                    dw.data_mut()[o] = acc;
                }
            }
        }
    }
    dw
}

fn add_assign<S: Scalar>(acc: &mut Tensor4<S>, other: &Tensor4<S>) {
    debug_assert_eq!(acc.dims(), other.dims());
    for (a, b) in acc.data_mut().iter_mut().zip(other.data().iter()) {
        *a += *b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySpec;
    use crate::ops::sk_dilated;
    use crate::oracle::{naive_conv2d, naive_dilated_conv2d};
    use crate::rng::SplitMix64;

    fn hand_geometry() -> ConvGeometry {
        GeometrySpec {
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
        .unwrap()
    }

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
    fn patch_matrix_shape_and_values() {
        // 5x5 input, 3x3 filter, stride 3, padding 1: 4 patches of 9 taps.
        let g = fig4_geometry();
        let mut rng = SplitMix64::new(15);
        let mut x = Tensor4::<f64>::zeros(g.input_dims());
        let mut w = Tensor4::<f64>::zeros(g.filter_dims());
        x.fill_uniform(&mut rng, -1.0, 1.0);
        w.fill_uniform(&mut rng, -1.0, 1.0);

        let patches = im2col(&x, &g).unwrap();
        assert_eq!((patches.rows(), patches.cols()), (4, 9));

        let y = gemm_conv2d(&x, &w, &g).unwrap();
        let (expect, _) = naive_conv2d(&x, &w, &g).unwrap();
        assert_eq!(y.data(), expect.data());
    }

    #[test]
    fn single_element_patch_matrix() {
        let g = GeometrySpec {
            n: 1,
            ih: 1,
            iw: 1,
            ic: 1,
            oc: 1,
            fh: 1,
            fw: 1,
            sh: 1,
            sw: 1,
            ph: 0,
            pw: 0,
        }
        .infer()
        .unwrap();
        let x = Tensor4::from_vec([1, 1, 1, 1], vec![4.25]).unwrap();
        let patches = im2col(&x, &g).unwrap();
        assert_eq!((patches.rows(), patches.cols()), (1, 1));
        assert_eq!(patches.at(0, 0), 4.25);
    }

    #[test]
    fn row_sums_of_ones_without_padding() {
        let g = GeometrySpec {
            n: 2,
            ih: 6,
            iw: 5,
            ic: 3,
            oc: 1,
            fh: 3,
            fw: 2,
            sh: 1,
            sw: 2,
            ph: 0,
            pw: 0,
        }
        .infer()
        .unwrap();
        let x = Tensor4::from_fn(g.input_dims(), |_| 1.0);
        let patches = im2col(&x, &g).unwrap();
        let taps = (g.fh() * g.fw() * g.ic()) as f64;
        for r in 0..patches.rows() {
            let sum: f64 = (0..patches.cols()).map(|c| patches.at(r, c)).sum();
            assert_eq!(sum, taps);
        }
    }

    #[test]
    fn gemm_hand_case() {
        let g = hand_geometry();
        let x = Tensor4::from_vec([1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor4::from_vec([1, 2, 1, 1], vec![2.0, 3.0]).unwrap();
        let y = gemm_conv2d(&x, &w, &g).unwrap();
        assert_eq!(y.data(), &[8.0, 18.0]);
    }

    #[test]
    fn one_by_one_filter_mixes_channels() {
        let g = GeometrySpec {
            n: 1,
            ih: 2,
            iw: 2,
            ic: 2,
            oc: 1,
            fh: 1,
            fw: 1,
            sh: 1,
            sw: 1,
            ph: 0,
            pw: 0,
        }
        .infer()
        .unwrap();
        let x = Tensor4::from_fn(g.input_dims(), |i| {
            (i[1] * 2 + i[2]) as f64 + i[3] as f64 * 0.5
        });
        let w = Tensor4::from_vec([1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let y = gemm_conv2d(&x, &w, &g).unwrap();
        let (expect, _) = naive_conv2d(&x, &w, &g).unwrap();
        assert_eq!(y.data(), expect.data());
    }

    #[test]
    fn partition_is_exact_at_one_segment() {
        let g = GeometrySpec {
            n: 2,
            ih: 7,
            iw: 6,
            ic: 2,
            oc: 3,
            fh: 3,
            fw: 2,
            sh: 2,
            sw: 2,
            ph: 1,
            pw: 1,
        }
        .infer()
        .unwrap();
        let mut rng = SplitMix64::new(30);
        let mut x = Tensor4::<f64>::zeros(g.input_dims());
        let mut dy = Tensor4::<f64>::zeros(g.output_dims());
        x.fill_uniform(&mut rng, -1.0, 1.0);
        dy.fill_uniform(&mut rng, -1.0, 1.0);

        let (expect, expect_stats) = sk_dilated(&x, &dy, &g).unwrap();
        let (dw, stats) = partitioned_dilated(&x, &dy, &g, 1).unwrap();
        assert_eq!(dw.data(), expect.data());
        assert_eq!(stats.macs, expect_stats.macs);
    }

    #[test]
    fn partition_into_single_terms_matches_oracle() {
        let g = GeometrySpec {
            n: 1,
            ih: 6,
            iw: 6,
            ic: 2,
            oc: 2,
            fh: 3,
            fw: 3,
            sh: 2,
            sw: 2,
            ph: 1,
            pw: 1,
        }
        .infer()
        .unwrap();
        let mut rng = SplitMix64::new(31);
        let mut x = Tensor4::<f64>::zeros(g.input_dims());
        let mut dy = Tensor4::<f64>::zeros(g.output_dims());
        x.fill_uniform(&mut rng, -1.0, 1.0);
        dy.fill_uniform(&mut rng, -1.0, 1.0);

        let g_k = g.n() * g.oh() * g.ow();
        let (dw, _) = partitioned_dilated(&x, &dy, &g, g_k).unwrap();
        let (expect, _) = naive_dilated_conv2d(&x, &dy, &g).unwrap();
        for (a, b) in dw.data().iter().zip(expect.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        // tree reduction reaches the same values within tolerance
        let (dw_tree, _) = partitioned_dilated_with(&x, &dy, &g, g_k, Reduction::Tree).unwrap();
        for (a, b) in dw_tree.data().iter().zip(expect.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn hand_case_with_two_segments() {
        let g = hand_geometry();
        let x = Tensor4::from_vec([1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let dy = Tensor4::from_vec([1, 2, 1, 1], vec![1.0, 10.0]).unwrap();
        let (dw, _) = partitioned_dilated(&x, &dy, &g, 2).unwrap();
        assert_eq!(dw.data(), &[31.0, 42.0]);
    }

    #[test]
    fn segment_count_bounds() {
        let g = hand_geometry();
        let x = Tensor4::<f64>::zeros(g.input_dims());
        let dy = Tensor4::<f64>::zeros(g.output_dims());
        assert!(matches!(
            partitioned_dilated(&x, &dy, &g, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            partitioned_dilated(&x, &dy, &g, 3),
            Err(Error::Parameter(_))
        ));
    }
}
