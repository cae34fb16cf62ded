//! Dense row-major 4-D and 6-D tensors and the layout transformations the
//! operators need: filter rotation, filter transposition, boundary zero
//! padding and interior zero insertion.
//!
//! Out-of-range access is an error, never an implicit zero. The zero
//! semantics of padding and insertion live in the operator kernels and in
//! the explicit [`zero_pad_hw`] / [`zero_insert_hw`] transforms.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Dense 4-D tensor, row-major with the last extent fastest.
///
/// Houses input feature maps `(N, I_H, I_W, I_C)`, output feature maps
/// `(N, O_H, O_W, O_C)`, filters `(O_C, F_H, F_W, I_C)` and their
/// gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<S: Scalar> {
    dims: [usize; 4],
    data: Vec<S>,
}

impl<S: Scalar> Tensor4<S> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor4 {
            dims,
            data: vec![S::ZERO; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<S>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {expect} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> S) -> Self {
        let mut t = Tensor4::zeros(dims);
        for a in 0..dims[0] {
            for b in 0..dims[1] {
                for c in 0..dims[2] {
                    for d in 0..dims[3] {
                        let o = t.offset([a, b, c, d]);
                        t.data[o] = f([a, b, c, d]);
                    }
                }
            }
        }
        t
    }

    /// Fills with uniform samples from `[lo, hi)`.
    pub fn fill_uniform(&mut self, rng: &mut SplitMix64, lo: f64, hi: f64) {
        for v in &mut self.data {
            *v = S::from_f64(rng.uniform(lo, hi));
        }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Flat offset of a coordinate: `((a*d1 + b)*d2 + c)*d3 + d`.
    #[inline]
    pub fn offset(&self, idx: [usize; 4]) -> usize {
        ((idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]) * self.dims[3] + idx[3]
    }

    fn check(&self, idx: [usize; 4]) -> Result<()> {
        for (axis, (&index, &extent)) in idx.iter().zip(self.dims.iter()).enumerate() {
            if index >= extent {
                return Err(Error::Index {
                    axis,
                    index,
                    extent,
                });
            }
        }
        Ok(())
    }

    /// Checked element read.
    pub fn at(&self, idx: [usize; 4]) -> Result<S> {
        self.check(idx)?;
        Ok(self.data[self.offset(idx)])
    }

    /// Checked element write.
    pub fn set_at(&mut self, idx: [usize; 4], value: S) -> Result<()> {
        self.check(idx)?;
        let o = self.offset(idx);
        self.data[o] = value;
        Ok(())
    }

    /// Sum of all elements, accumulated in f64.
    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64()).sum()
    }

    /// Flat inner product `<self, other>`, accumulated in f64.
    pub fn dot_f64(&self, other: &Tensor4<S>) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum()
    }
}

/// Dense 6-D tensor, row-major with the last extent fastest. Houses the
/// split-kernel pack produced by kernel decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor6<S: Scalar> {
    dims: [usize; 6],
    data: Vec<S>,
}

impl<S: Scalar> Tensor6<S> {
    pub fn zeros(dims: [usize; 6]) -> Self {
        Tensor6 {
            dims,
            data: vec![S::ZERO; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 6], data: Vec<S>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {expect} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor6 { dims, data })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 6] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn offset(&self, idx: [usize; 6]) -> usize {
        idx.iter()
            .zip(self.dims.iter())
            .fold(0, |o, (&i, &d)| o * d + i)
    }

    fn check(&self, idx: [usize; 6]) -> Result<()> {
        for (axis, (&index, &extent)) in idx.iter().zip(self.dims.iter()).enumerate() {
            if index >= extent {
                return Err(Error::Index {
                    axis,
                    index,
                    extent,
                });
            }
        }
        Ok(())
    }

    pub fn at(&self, idx: [usize; 6]) -> Result<S> {
        self.check(idx)?;
        Ok(self.data[self.offset(idx)])
    }

    pub fn set_at(&mut self, idx: [usize; 6], value: S) -> Result<()> {
        self.check(idx)?;
        let o = self.offset(idx);
        self.data[o] = value;
        Ok(())
    }
}

/// Rotates filters 180 degrees in the spatial plane:
/// `out[oc, fh, fw, ic] = w[oc, F_H-1-fh, F_W-1-fw, ic]`.
pub fn rot180<S: Scalar>(w: &Tensor4<S>) -> Tensor4<S> {
    let [oc_n, fh_n, fw_n, ic_n] = w.dims();
    let mut out = Tensor4::zeros(w.dims());
    for oc in 0..oc_n {
        for fh in 0..fh_n {
            for fw in 0..fw_n {
                for ic in 0..ic_n {
                    let src = w.offset([oc, fh_n - 1 - fh, fw_n - 1 - fw, ic]);
                    let dst = out.offset([oc, fh, fw, ic]);
                    out.data[dst] = w.data[src];
                }
            }
        }
    }
    out
}

/// Permutes filters from `(O_C, F_H, F_W, I_C)` to `(F_H, F_W, I_C, O_C)`.
///
/// A value-preserving performance layout; never changes operator results.
pub fn transpose_filters<S: Scalar>(w: &Tensor4<S>) -> Tensor4<S> {
    let [oc_n, fh_n, fw_n, ic_n] = w.dims();
    let mut out = Tensor4::zeros([fh_n, fw_n, ic_n, oc_n]);
    for oc in 0..oc_n {
        for fh in 0..fh_n {
            for fw in 0..fw_n {
                for ic in 0..ic_n {
                    let src = w.offset([oc, fh, fw, ic]);
                    let dst = out.offset([fh, fw, ic, oc]);
                    out.data[dst] = w.data[src];
                }
            }
        }
    }
    out
}

/// Inverse of [`transpose_filters`]: `(F_H, F_W, I_C, O_C)` back to
/// `(O_C, F_H, F_W, I_C)`.
pub fn untranspose_filters<S: Scalar>(w: &Tensor4<S>) -> Tensor4<S> {
    let [fh_n, fw_n, ic_n, oc_n] = w.dims();
    let mut out = Tensor4::zeros([oc_n, fh_n, fw_n, ic_n]);
    for fh in 0..fh_n {
        for fw in 0..fw_n {
            for ic in 0..ic_n {
                for oc in 0..oc_n {
                    let src = w.offset([fh, fw, ic, oc]);
                    let dst = out.offset([oc, fh, fw, ic]);
                    out.data[dst] = w.data[src];
                }
            }
        }
    }
    out
}

/// Pads the two spatial axes of an `(N, H, W, C)` tensor with `ph` / `pw`
/// zero rows and columns on each side.
pub fn zero_pad_hw<S: Scalar>(x: &Tensor4<S>, ph: usize, pw: usize) -> Tensor4<S> {
    if ph == 0 && pw == 0 {
        return x.clone();
    }
    let [n_n, h_n, w_n, c_n] = x.dims();
    let mut out = Tensor4::zeros([n_n, h_n + 2 * ph, w_n + 2 * pw, c_n]);
    for n in 0..n_n {
        for h in 0..h_n {
            // Rows are contiguous in the last two axes; copy whole rows.
            let src = x.offset([n, h, 0, 0]);
            let dst = out.offset([n, h + ph, pw, 0]);
            let row = w_n * c_n;
            out.data[dst..dst + row].copy_from_slice(&x.data[src..src + row]);
        }
    }
    out
}

/// Pads the two spatial axes with independent top/left and bottom/right
/// counts. Needed to express a deconvolution as a plain convolution when
/// the forward pass discarded a remainder row or column.
pub(crate) fn zero_pad_hw_asym<S: Scalar>(
    x: &Tensor4<S>,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> Tensor4<S> {
    let [n_n, h_n, w_n, c_n] = x.dims();
    let mut out = Tensor4::zeros([n_n, h_n + top + bottom, w_n + left + right, c_n]);
    for n in 0..n_n {
        for h in 0..h_n {
            let src = x.offset([n, h, 0, 0]);
            let dst = out.offset([n, h + top, left, 0]);
            let row = w_n * c_n;
            out.data[dst..dst + row].copy_from_slice(&x.data[src..src + row]);
        }
    }
    out
}

/// Inserts `sh - 1` / `sw - 1` zeros between adjacent spatial elements of
/// an `(N, O_H, O_W, C)` tensor, producing extents
/// `O_H + (O_H - 1)(sh - 1)` by `O_W + (O_W - 1)(sw - 1)`.
pub fn zero_insert_hw<S: Scalar>(y: &Tensor4<S>, sh: usize, sw: usize) -> Tensor4<S> {
    debug_assert!(sh >= 1 && sw >= 1);
    if sh == 1 && sw == 1 {
        return y.clone();
    }
    let [n_n, h_n, w_n, c_n] = y.dims();
    let hp = h_n + (h_n - 1) * (sh - 1);
    let wp = w_n + (w_n - 1) * (sw - 1);
    let mut out = Tensor4::zeros([n_n, hp, wp, c_n]);
    for n in 0..n_n {
        for h in 0..h_n {
            for w in 0..w_n {
                let src = y.offset([n, h, w, 0]);
                let dst = out.offset([n, h * sh, w * sw, 0]);
                out.data[dst..dst + c_n].copy_from_slice(&y.data[src..src + c_n]);
            }
        }
    }
    out
}
