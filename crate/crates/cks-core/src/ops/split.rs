//! Stage 1 of kernel-split deconvolution: rotate the filters 180 degrees
//! and split them into `sh * sw` smaller dense kernels, one per residue
//! class of the input coordinate modulo the stride.

use crate::error::{Error, Result};
use crate::geometry::ConvGeometry;
use crate::scalar::Scalar;
use crate::tensor::{Tensor4, Tensor6};

/// Spatial extent of the `(r, .)`-th sub-kernel along one axis:
/// `ceil((f - r) / s)`, zero when the residue class has no taps.
#[inline]
pub(crate) fn split_extent(f: usize, s: usize, r: usize) -> usize {
    if r < f {
        (f - r).div_ceil(s)
    } else {
        0
    }
}

/// The split-kernel pack: a 6-D tensor
/// `C in R^(sh x sw x O_C x ceil(F_H/sh) x ceil(F_W/sw) x I_C)`
/// whose `(y, x)` slice holds the sub-kernel of extents
/// `CH[y,x] = ceil((F_H - y)/sh)` by `CW[y,x] = ceil((F_W - x)/sw)`;
/// slots beyond those extents stay zero. The sub-kernel extents partition
/// the filter taps: `sum CH*CW = F_H * F_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSplit<S: Scalar> {
    c: Tensor6<S>,
    fh: usize,
    fw: usize,
    sh: usize,
    sw: usize,
    oc: usize,
    ic: usize,
}

impl<S: Scalar> KernelSplit<S> {
    pub fn tensor(&self) -> &Tensor6<S> {
        &self.c
    }

    pub fn strides(&self) -> (usize, usize) {
        (self.sh, self.sw)
    }

    pub fn filter_hw(&self) -> (usize, usize) {
        (self.fh, self.fw)
    }

    /// `(CH[y,x], CW[y,x])` for the `(y, x)`-th sub-kernel; `(0, 0)` means
    /// the residue class is empty and the split contributes nothing.
    pub fn extent(&self, y: usize, x: usize) -> (usize, usize) {
        (
            split_extent(self.fh, self.sh, y),
            split_extent(self.fw, self.sw, x),
        )
    }

    /// Zero-padding offsets `(oph, opw) = (CH - 1, CW - 1)` of the
    /// unit-stride convolution the sub-kernel performs in stage 2.
    pub fn opad(&self, y: usize, x: usize) -> (usize, usize) {
        let (ch, cw) = self.extent(y, x);
        (ch.saturating_sub(1), cw.saturating_sub(1))
    }

    /// Whether this pack was built for the same filter shape, stride and
    /// channel extents as `g`.
    pub fn matches(&self, g: &ConvGeometry) -> bool {
        self.fh == g.fh()
            && self.fw == g.fw()
            && self.sh == g.sh()
            && self.sw == g.sw()
            && self.oc == g.oc()
            && self.ic == g.ic()
    }
}

/// Builds the split-kernel pack from filters in `(O_C, F_H, F_W, I_C)`
/// layout.
///
/// The slot-to-tap map embeds the 180-degree rotation by reversing the
/// slot index:
///
/// ```text
/// (fh, fw) = (y, x) + ((oph - ch)*sh, (opw - cw)*sw)
/// C[y, x, oc, ch, cw, ic] = W[oc, fh, fw, ic]
/// ```
///
/// At unit stride the single sub-kernel is exactly the rotated filter.
pub fn ks_split<S: Scalar>(w: &Tensor4<S>, g: &ConvGeometry) -> Result<KernelSplit<S>> {
    g.check_filters(w)?;
    let (fh_n, fw_n) = (g.fh(), g.fw());
    let (sh, sw) = (g.sh(), g.sw());
    let (oc_n, ic_n) = (g.oc(), g.ic());
    let slots_h = fh_n.div_ceil(sh);
    let slots_w = fw_n.div_ceil(sw);
    let mut c = Tensor6::zeros([sh, sw, oc_n, slots_h, slots_w, ic_n]);
    for y in 0..sh {
        let ch_n = split_extent(fh_n, sh, y);
        for x in 0..sw {
            let cw_n = split_extent(fw_n, sw, x);
            // extents 0 leave the slice zero; taps stay within W by
            // construction, so no range check is needed here
            for oc in 0..oc_n {
                for ch in 0..ch_n {
                    let fh = y + (ch_n - 1 - ch) * sh;
                    for cw in 0..cw_n {
                        let fw = x + (cw_n - 1 - cw) * sw;
                        for ic in 0..ic_n {
                            let v = w.data()[w.offset([oc, fh, fw, ic])];
                            let o = c.offset([y, x, oc, ch, cw, ic]);
                            c.data_mut()[o] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(KernelSplit {
        c,
        fh: fh_n,
        fw: fw_n,
        sh,
        sw,
        oc: oc_n,
        ic: ic_n,
    })
}

impl<S: Scalar> KernelSplit<S> {
    /// Total taps across all sub-kernels; always `F_H * F_W`.
    pub fn tap_count(&self) -> usize {
        let mut total = 0;
        for y in 0..self.sh {
            for x in 0..self.sw {
                let (ch, cw) = self.extent(y, x);
                total += ch * cw;
            }
        }
        total
    }

    /// Geometry/shape mismatch guard used by the stage 2&3 kernels.
    pub(crate) fn require_match(&self, g: &ConvGeometry) -> Result<()> {
        if !self.matches(g) {
            return Err(Error::Shape(alloc::format!(
                "kernel split built for filter ({}, {}) stride ({}, {}) channels {}->{}, \
                 geometry wants filter ({}, {}) stride ({}, {}) channels {}->{}",
                self.fh,
                self.fw,
                self.sh,
                self.sw,
                self.ic,
                self.oc,
                g.fh(),
                g.fw(),
                g.sh(),
                g.sw(),
                g.ic(),
                g.oc()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometrySpec;
    use crate::rng::SplitMix64;
    use crate::tensor::rot180;
    use alloc::vec::Vec;

    fn geometry(ih: usize, f: usize, s: usize, p: usize) -> ConvGeometry {
        GeometrySpec {
            n: 1,
            ih,
            iw: ih,
            ic: 1,
            oc: 1,
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
    fn three_by_three_at_stride_two() {
        // 3x3 filter at stride 2 splits into sub-kernels of extents
        // (2,2), (2,1), (1,2), (1,1): taps partition as {4, 2, 2, 1}.
        let g = geometry(7, 3, 2, 1);
        let w = Tensor4::from_fn(g.filter_dims(), |i| (i[1] * 3 + i[2]) as f64);
        let ks = ks_split(&w, &g).unwrap();
        assert_eq!(ks.tensor().dims(), [2, 2, 1, 2, 2, 1]);
        assert_eq!(ks.extent(0, 0), (2, 2));
        assert_eq!(ks.extent(0, 1), (2, 1));
        assert_eq!(ks.extent(1, 0), (1, 2));
        assert_eq!(ks.extent(1, 1), (1, 1));
        assert_eq!(ks.tap_count(), 9);

        // Rotation is embedded: C[0,0] is the even-even sample of the
        // rotated filter.
        let r = rot180(&w);
        for (ch, cw) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(
                ks.tensor().at([0, 0, 0, ch, cw, 0]).unwrap(),
                r.at([0, ch * 2, cw * 2, 0]).unwrap()
            );
        }
    }

    #[test]
    fn unit_stride_single_split_is_rot180() {
        let g = geometry(6, 3, 1, 1);
        let mut rng = SplitMix64::new(5);
        let mut w = Tensor4::<f64>::zeros(g.filter_dims());
        w.fill_uniform(&mut rng, -1.0, 1.0);
        let ks = ks_split(&w, &g).unwrap();
        assert_eq!(ks.tensor().dims(), [1, 1, 1, 3, 3, 1]);
        let r = rot180(&w);
        assert_eq!(ks.tensor().data(), r.data());
    }

    #[test]
    fn taps_partition_for_all_filter_stride_pairs() {
        for f in 1..=7 {
            for s in 1..=4 {
                let mut total = 0;
                for y in 0..s {
                    for x in 0..s {
                        total += split_extent(f, s, y) * split_extent(f, s, x);
                    }
                }
                assert_eq!(total, f * f, "partition broken for F={f}, s={s}");
            }
        }
    }

    #[test]
    fn nonzero_values_are_preserved() {
        // With no zero entries in W, the multiset of non-zero values of C
        // equals the multiset of values of W.
        let g = geometry(9, 5, 3, 2);
        let mut rng = SplitMix64::new(17);
        let mut w = Tensor4::<f64>::zeros(g.filter_dims());
        w.fill_uniform(&mut rng, 0.5, 1.5);
        let ks = ks_split(&w, &g).unwrap();

        let mut from_c: Vec<f64> = ks
            .tensor()
            .data()
            .iter()
            .copied()
            .filter(|&v| v != 0.0)
            .collect();
        let mut from_w: Vec<f64> = w.data().to_vec();
        from_c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        from_w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(from_c, from_w);
    }

    #[test]
    fn empty_residue_classes_when_stride_exceeds_filter() {
        let g = geometry(8, 1, 2, 0);
        let w = Tensor4::from_fn(g.filter_dims(), |_| 2.0);
        let ks = ks_split(&w, &g).unwrap();
        assert_eq!(ks.extent(0, 0), (1, 1));
        assert_eq!(ks.extent(1, 1), (0, 0));
        assert_eq!(ks.tap_count(), 1);
    }

    #[test]
    fn mismatched_filters_are_rejected() {
        let g = geometry(7, 3, 2, 1);
        let w = Tensor4::<f64>::zeros([1, 2, 2, 1]);
        assert!(ks_split(&w, &g).is_err());
    }
}
