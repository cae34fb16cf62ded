//! Gradient checks across layer configurations and the training smoke run.

mod common;

use cks_core::layer::{grad_check, smoke_train, Backend, Conv2dLayer, SquaredError, TrainConfig};
use cks_core::rng::SplitMix64;
use cks_core::{Error, GeometrySpec, Tensor4};

/// Small random layer configurations for finite-difference checks; kept
/// compact because every parameter entry costs two forward passes.
fn sample_layer_geometry(rng: &mut SplitMix64) -> cks_core::ConvGeometry {
    loop {
        let f = 1 + rng.below(3);
        let spec = GeometrySpec {
            n: 1 + rng.below(2),
            ih: 4 + rng.below(4),
            iw: 4 + rng.below(4),
            ic: 1 + rng.below(2),
            oc: 1 + rng.below(2),
            fh: f,
            fw: f,
            sh: 1 + rng.below(3),
            sw: 1 + rng.below(3),
            ph: rng.below(f),
            pw: rng.below(f),
        };
        if let Ok(g) = spec.infer() {
            return g;
        }
    }
}

#[test]
fn gradients_match_finite_differences_across_configurations() {
    let mut rng = SplitMix64::new(0x6D);
    let mut strides_seen = [false; 4];
    for case in 0..20 {
        let g = sample_layer_geometry(&mut rng);
        strides_seen[g.sh().max(g.sw()) - 1] = true;
        let mut layer =
            Conv2dLayer::<f64>::with_seeded_weights(g, Backend::ZeroSkip, rng.next_u64());
        let mut x = Tensor4::<f64>::zeros(g.input_dims());
        x.fill_uniform(&mut rng, -1.0, 1.0);
        let err = grad_check(&mut layer, &x, &SquaredError, 1e-5).unwrap();
        assert!(err < 1e-5, "case {case} ({g:?}): discrepancy {err}");
    }
    // the sample must have exercised strided layers
    assert!(
        strides_seen[1] && strides_seen[2],
        "grid never drew stride 2 and 3"
    );
}

#[test]
fn smoke_run_converges() {
    let trace = smoke_train(&TrainConfig::default()).unwrap();
    assert_eq!(trace.first().unwrap().0, 0);
    assert_eq!(trace.last().unwrap().0, 500);

    let initial = trace[0].1;
    let last = trace.last().unwrap().1;
    assert!(
        last < 0.1 * initial,
        "final loss {last} did not reach a tenth of {initial}"
    );

    // monotone trend: each 50-step window mean sits below the previous
    let windows: Vec<f64> = trace[1..]
        .chunks(5)
        .map(|c| c.iter().map(|p| p.1).sum::<f64>() / c.len() as f64)
        .collect();
    for pair in windows.windows(2) {
        assert!(
            pair[1] < pair[0],
            "window means not decreasing: {windows:?}"
        );
    }
}

#[test]
fn smoke_run_is_backend_independent() {
    let reference = smoke_train(&TrainConfig {
        backend: Backend::Reference,
        ..TrainConfig::default()
    })
    .unwrap();
    let skipping = smoke_train(&TrainConfig {
        backend: Backend::ZeroSkip,
        ..TrainConfig::default()
    })
    .unwrap();
    assert_eq!(reference.len(), skipping.len());
    for ((sa, la), (sb, lb)) in reference.iter().zip(&skipping) {
        assert_eq!(sa, sb);
        assert!(
            (la - lb).abs() <= 1e-4,
            "traces diverged at step {sa}: {la} vs {lb}"
        );
    }
}

#[test]
fn divergence_is_reported() {
    let config = TrainConfig {
        lr: 1e9,
        steps: 50,
        ..TrainConfig::default()
    };
    assert!(matches!(smoke_train(&config), Err(Error::Training(_))));
}
