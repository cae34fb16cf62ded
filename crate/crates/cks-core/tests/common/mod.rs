#![allow(dead_code)]

//! Shared helpers for the randomized equivalence sweeps.

use cks_core::rng::SplitMix64;
use cks_core::{ConvGeometry, GeometrySpec, Scalar, Tensor4};

/// Draws a valid geometry from the verification grid: inputs 4..12,
/// filters in {1,2,3,5,7}, strides 1..4, paddings 0..3 (below the filter
/// extent), channels in {1,3,4}, batch in {1,2}. Each axis is sampled
/// independently; invalid combinations are rejected and redrawn.
pub fn sample_geometry(rng: &mut SplitMix64) -> ConvGeometry {
    const FILTERS: [usize; 5] = [1, 2, 3, 5, 7];
    const CHANNELS: [usize; 3] = [1, 3, 4];
    loop {
        let fh = *rng.choose(&FILTERS);
        let fw = *rng.choose(&FILTERS);
        let spec = GeometrySpec {
            n: 1 + rng.below(2),
            ih: 4 + rng.below(9),
            iw: 4 + rng.below(9),
            ic: *rng.choose(&CHANNELS),
            oc: *rng.choose(&CHANNELS),
            fh,
            fw,
            sh: 1 + rng.below(4),
            sw: 1 + rng.below(4),
            ph: rng.below(4.min(fh)),
            pw: rng.below(4.min(fw)),
        };
        if let Ok(g) = spec.infer() {
            return g;
        }
    }
}

/// Random tensors for one geometry, values uniform in [-1, 1).
pub fn sample_instance<S: Scalar>(
    rng: &mut SplitMix64,
    g: &ConvGeometry,
) -> (Tensor4<S>, Tensor4<S>, Tensor4<S>) {
    let mut x = Tensor4::zeros(g.input_dims());
    let mut w = Tensor4::zeros(g.filter_dims());
    let mut dy = Tensor4::zeros(g.output_dims());
    x.fill_uniform(rng, -1.0, 1.0);
    w.fill_uniform(rng, -1.0, 1.0);
    dy.fill_uniform(rng, -1.0, 1.0);
    (x, w, dy)
}

/// Relative error against a unit scale, so near-zero sums do not inflate
/// the ratio.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Largest elementwise [`rel_err`] between two tensors.
pub fn max_rel_err<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| rel_err(x.to_f64(), y.to_f64()))
        .fold(0.0, f64::max)
}

/// Exact equality (±0 identified), the 64-bit deterministic-mode check.
pub fn exactly_equal<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> bool {
    a.dims() == b.dims() && a.data().iter().zip(b.data()).all(|(x, y)| x == y)
}
