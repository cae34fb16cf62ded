//! Randomized equivalence verifier behind `cks verify`.
//!
//! Draws geometries from the documented grid, runs every zero-skipping
//! operator against its brute-force oracle in both scalar widths, checks
//! the MAC accounting identities and the adjoint identities, and reports
//! one record per operator. Output carries no timing, so a summary is
//! reproducible byte for byte from the seed alone.

use serde::{Deserialize, Serialize};

use cks_core::gemm::{gemm_conv2d, partitioned_dilated};
use cks_core::ops::{conv_v2, ks_deconv, ks_deconv_v2, ks_split, sk_dilated, sk_dilated_v2};
use cks_core::oracle::{
    naive_conv2d, naive_deconv2d, naive_deconv2d_scatter, naive_dilated_conv2d,
};
use cks_core::rng::SplitMix64;
use cks_core::{ConvGeometry, GeometrySpec, OpStats, Scalar, Tensor4};

use crate::fixtures::GeometryJson;

/// Operators the verifier covers, in report order.
pub const OPS: [&str; 7] = [
    "conv_v2",
    "gemm_conv2d",
    "ks_deconv",
    "ks_deconv_v2",
    "sk_dilated",
    "sk_dilated_v2",
    "partitioned_dilated",
];

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    pub cases: usize,
    /// Test fixture: corrupt the named operator's output on the first
    /// case so the verifier's failure path can be exercised end to end.
    pub inject_fault: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Failure {
    pub case: usize,
    pub geometry: GeometryJson,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpSummary {
    pub op: String,
    pub cases: usize,
    /// 64-bit runs reproduced the oracle exactly on every case.
    pub exact_f64: bool,
    pub max_rel_err_f64: f64,
    pub max_rel_err_f32: f64,
    /// Loop trips executed / oracle trips, accumulated over the sweep.
    pub macs: u64,
    pub oracle_macs: u64,
    pub mac_ratio: f64,
    pub mac_checks_pass: bool,
    pub pass: bool,
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub cases: usize,
    pub adjoint_max_rel_err: f64,
    pub pass: bool,
    pub ops: Vec<OpSummary>,
}

/// Same grid as the library's equivalence sweeps: inputs 4..12, filters
/// in {1,2,3,5,7}, strides 1..4, paddings 0..3 below the filter extent,
/// channels in {1,3,4}, batch in {1,2}.
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

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn max_rel_err<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| rel_err(x.to_f64(), y.to_f64()))
        .fold(0.0, f64::max)
}

struct OpState {
    exact_f64: bool,
    max_rel_err_f64: f64,
    max_rel_err_f32: f64,
    macs: u64,
    oracle_macs: u64,
    mac_checks_pass: bool,
    failure: Option<Failure>,
}

impl OpState {
    fn new() -> Self {
        OpState {
            exact_f64: true,
            max_rel_err_f64: 0.0,
            max_rel_err_f32: 0.0,
            macs: 0,
            oracle_macs: 0,
            mac_checks_pass: true,
            failure: None,
        }
    }

    fn record_values<S: Scalar>(
        &mut self,
        case: usize,
        g: &ConvGeometry,
        got: &Tensor4<S>,
        expect: &Tensor4<S>,
    ) {
        let err = max_rel_err(got, expect);
        if S::WIDTH == 8 {
            self.max_rel_err_f64 = self.max_rel_err_f64.max(err);
            let exact = got.data().iter().zip(expect.data()).all(|(a, b)| a == b);
            if !exact {
                self.exact_f64 = false;
                self.fail(case, g, format!("64-bit mismatch, max rel err {err:e}"));
            }
        } else {
            self.max_rel_err_f32 = self.max_rel_err_f32.max(err);
            if err > 1e-5 {
                self.fail(case, g, format!("32-bit rel err {err:e} above 1e-5"));
            }
        }
    }

    fn record_stats(&mut self, stats: OpStats) {
        self.macs += stats.macs;
        self.oracle_macs += stats.oracle_macs();
    }

    fn check(&mut self, ok: bool, case: usize, g: &ConvGeometry, what: &str) {
        if !ok {
            self.mac_checks_pass = false;
            self.fail(case, g, what.to_string());
        }
    }

    fn fail(&mut self, case: usize, g: &ConvGeometry, detail: String) {
        if self.failure.is_none() {
            self.failure = Some(Failure {
                case,
                geometry: GeometryJson::from(g),
                detail,
            });
        }
    }

    fn into_summary(self, op: &str, cases: usize) -> OpSummary {
        let pass = self.failure.is_none();
        OpSummary {
            op: op.to_string(),
            cases,
            exact_f64: self.exact_f64,
            max_rel_err_f64: self.max_rel_err_f64,
            max_rel_err_f32: self.max_rel_err_f32,
            macs: self.macs,
            oracle_macs: self.oracle_macs,
            mac_ratio: if self.oracle_macs == 0 {
                1.0
            } else {
                self.macs as f64 / self.oracle_macs as f64
            },
            mac_checks_pass: self.mac_checks_pass,
            pass,
            failure: self.failure,
        }
    }
}

/// Corrupts one element; applied to the first case of the op named in
/// `inject_fault`.
fn sabotage<S: Scalar>(t: &mut Tensor4<S>) {
    if !t.is_empty() {
        let v = t.data()[0];
        t.data_mut()[0] = v + S::ONE;
    }
}

pub fn run_verify(config: &VerifyConfig) -> VerifySummary {
    let mut rng = SplitMix64::new(config.seed);
    let mut states: Vec<OpState> = OPS.iter().map(|_| OpState::new()).collect();
    let mut adjoint_max = 0.0f64;
    let fault_for =
        |op: &str, case: usize| -> bool { case == 0 && config.inject_fault.as_deref() == Some(op) };

    for case in 0..config.cases {
        let g = sample_geometry(&mut rng);
        let mut x = Tensor4::<f64>::zeros(g.input_dims());
        let mut w = Tensor4::<f64>::zeros(g.filter_dims());
        let mut dy = Tensor4::<f64>::zeros(g.output_dims());
        x.fill_uniform(&mut rng, -1.0, 1.0);
        w.fill_uniform(&mut rng, -1.0, 1.0);
        dy.fill_uniform(&mut rng, -1.0, 1.0);
        let x32 = Tensor4::<f32>::from_vec(x.dims(), x.data().iter().map(|&v| v as f32).collect())
            .unwrap();
        let w32 = Tensor4::<f32>::from_vec(w.dims(), w.data().iter().map(|&v| v as f32).collect())
            .unwrap();
        let dy32 =
            Tensor4::<f32>::from_vec(dy.dims(), dy.data().iter().map(|&v| v as f32).collect())
                .unwrap();

        // the oracles, once per width
        let (conv_ref, conv_ref_stats) = naive_conv2d(&x, &w, &g).unwrap();
        let (deconv_ref, deconv_ref_stats) = naive_deconv2d(&dy, &w, &g).unwrap();
        let (dilated_ref, dilated_ref_stats) = naive_dilated_conv2d(&x, &dy, &g).unwrap();
        let (conv_ref32, _) = naive_conv2d(&x32, &w32, &g).unwrap();
        let (deconv_ref32, _) = naive_deconv2d(&dy32, &w32, &g).unwrap();
        let (dilated_ref32, _) = naive_dilated_conv2d(&x32, &dy32, &g).unwrap();
        let scatter = naive_deconv2d_scatter(&dy, &w, &g).unwrap();

        // conv_v2
        {
            let s = &mut states[0];
            let (mut y, stats) = conv_v2(&x, &w, &g).unwrap();
            if fault_for("conv_v2", case) {
                sabotage(&mut y);
            }
            s.record_values(case, &g, &y, &conv_ref);
            s.record_stats(stats);
            s.check(
                stats.oracle_macs() == conv_ref_stats.macs,
                case,
                &g,
                "conv_v2 stats do not add up to the oracle count",
            );
            let untrimmed = g.ph() == 0 && g.pw() == 0;
            s.check(
                (stats.macs == conv_ref_stats.macs) == untrimmed,
                case,
                &g,
                "conv_v2 trim count inconsistent with padding",
            );
            let (y32, _) = conv_v2(&x32, &w32, &g).unwrap();
            s.record_values(case, &g, &y32, &conv_ref32);
        }

        // gemm_conv2d
        {
            let s = &mut states[1];
            let mut y = gemm_conv2d(&x, &w, &g).unwrap();
            if fault_for("gemm_conv2d", case) {
                sabotage(&mut y);
            }
            s.record_values(case, &g, &y, &conv_ref);
            s.record_stats(conv_ref_stats); // the lowering runs every oracle term
            let y32 = gemm_conv2d(&x32, &w32, &g).unwrap();
            s.record_values(case, &g, &y32, &conv_ref32);
        }

        // the two oracle deconvolution forms must agree before the fast
        // paths are judged against them
        states[2].check(
            deconv_ref
                .data()
                .iter()
                .zip(scatter.data())
                .all(|(a, b)| a == b),
            case,
            &g,
            "deconvolution oracle forms disagree",
        );

        let ks = ks_split(&w, &g).unwrap();
        let ks32 = ks_split(&w32, &g).unwrap();

        // ks_deconv
        let base_macs = {
            let s = &mut states[2];
            let (mut dx, stats) = ks_deconv(&dy, &ks, &g).unwrap();
            if fault_for("ks_deconv", case) {
                sabotage(&mut dx);
            }
            s.record_values(case, &g, &dx, &deconv_ref);
            s.record_stats(stats);
            s.check(
                stats.oracle_macs() == deconv_ref_stats.macs,
                case,
                &g,
                "ks_deconv stats do not add up to the oracle count",
            );
            if g.ih().is_multiple_of(g.sh()) && g.iw().is_multiple_of(g.sw()) {
                s.check(
                    stats.macs * (g.sh() * g.sw()) as u64 == deconv_ref_stats.macs,
                    case,
                    &g,
                    "ks_deconv did not hit the exact split ratio",
                );
            }
            let (dx32, _) = ks_deconv(&dy32, &ks32, &g).unwrap();
            s.record_values(case, &g, &dx32, &deconv_ref32);
            stats.macs
        };

        // ks_deconv_v2
        {
            let s = &mut states[3];
            let (mut dx, stats) = ks_deconv_v2(&dy, &ks, &g).unwrap();
            if fault_for("ks_deconv_v2", case) {
                sabotage(&mut dx);
            }
            s.record_values(case, &g, &dx, &deconv_ref);
            s.record_stats(stats);
            s.check(
                stats.macs <= base_macs,
                case,
                &g,
                "trimming increased the split trip count",
            );
            let (dx32, _) = ks_deconv_v2(&dy32, &ks32, &g).unwrap();
            s.record_values(case, &g, &dx32, &deconv_ref32);
        }

        // sk_dilated
        let leap_macs = {
            let s = &mut states[4];
            let (mut dw, stats) = sk_dilated(&x, &dy, &g).unwrap();
            if fault_for("sk_dilated", case) {
                sabotage(&mut dw);
            }
            s.record_values(case, &g, &dw, &dilated_ref);
            s.record_stats(stats);
            let (ohp, owp) = g.inserted_output_hw();
            s.check(
                stats.macs as u128 * (ohp * owp) as u128
                    == dilated_ref_stats.macs as u128 * (g.oh() * g.ow()) as u128,
                case,
                &g,
                "sk_dilated did not skip exactly the inserted zeros",
            );
            let (dw32, _) = sk_dilated(&x32, &dy32, &g).unwrap();
            s.record_values(case, &g, &dw32, &dilated_ref32);
            stats.macs
        };

        // sk_dilated_v2
        {
            let s = &mut states[5];
            let (mut dw, stats) = sk_dilated_v2(&x, &dy, &g).unwrap();
            if fault_for("sk_dilated_v2", case) {
                sabotage(&mut dw);
            }
            s.record_values(case, &g, &dw, &dilated_ref);
            s.record_stats(stats);
            let padded = g.ph() > 0 || g.pw() > 0;
            s.check(
                if padded {
                    stats.macs < leap_macs
                } else {
                    stats.macs == leap_macs
                },
                case,
                &g,
                "trim count inconsistent with padding",
            );
            let (dw32, _) = sk_dilated_v2(&x32, &dy32, &g).unwrap();
            s.record_values(case, &g, &dw32, &dilated_ref32);
        }

        // partitioned_dilated: one segment must be exact, a random
        // segment count stays within 64-bit tolerance
        {
            let s = &mut states[6];
            let (mut dw, stats) = partitioned_dilated(&x, &dy, &g, 1).unwrap();
            if fault_for("partitioned_dilated", case) {
                sabotage(&mut dw);
            }
            s.record_values(case, &g, &dw, &dilated_ref);
            s.record_stats(stats);
            s.check(
                stats.macs == leap_macs,
                case,
                &g,
                "segmentation changed the reduction trip count",
            );
            let g_k = g.n() * g.oh() * g.ow();
            let gz = 1 + rng.below(g_k.min(8));
            let (dw_gz, _) = partitioned_dilated(&x, &dy, &g, gz).unwrap();
            let err = max_rel_err(&dw_gz, &dilated_ref);
            s.check(
                err <= 1e-12,
                case,
                &g,
                "segmented reduction drifted past 1e-12",
            );
            let (dw32, _) = partitioned_dilated(&x32, &dy32, &g, gz).unwrap();
            s.record_values(case, &g, &dw32, &dilated_ref32);
        }

        // adjoint identities through the zero-skipping path
        let (y, _) = conv_v2(&x, &w, &g).unwrap();
        let forward = y.dot_f64(&dy);
        let via_input = {
            let (dx, _) = ks_deconv(&dy, &ks, &g).unwrap();
            x.dot_f64(&dx)
        };
        let via_filter = {
            let (dw, _) = sk_dilated(&x, &dy, &g).unwrap();
            w.dot_f64(&dw)
        };
        adjoint_max = adjoint_max
            .max(rel_err(forward, via_input))
            .max(rel_err(forward, via_filter));
    }

    let ops: Vec<OpSummary> = states
        .into_iter()
        .zip(OPS.iter())
        .map(|(s, op)| s.into_summary(op, config.cases))
        .collect();
    let pass = ops.iter().all(|o| o.pass) && adjoint_max <= 1e-10;
    VerifySummary {
        seed: config.seed,
        cases: config.cases,
        adjoint_max_rel_err: adjoint_max,
        pass,
        ops: if config.cases == 0 { Vec::new() } else { ops },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes() {
        let summary = run_verify(&VerifyConfig {
            seed: 7,
            cases: 25,
            inject_fault: None,
        });
        assert!(summary.pass);
        assert_eq!(summary.ops.len(), OPS.len());
        for op in &summary.ops {
            assert!(op.pass, "{op:?}");
            assert!(op.exact_f64);
            assert!(op.max_rel_err_f32 <= 1e-5);
        }
        // strided cases make the deconv averages land well below 1
        let ks = summary.ops.iter().find(|o| o.op == "ks_deconv").unwrap();
        assert!(ks.mac_ratio < 1.0);
    }

    #[test]
    fn zero_cases_is_an_empty_pass() {
        let summary = run_verify(&VerifyConfig {
            seed: 7,
            cases: 0,
            inject_fault: None,
        });
        assert!(summary.pass);
        assert!(summary.ops.is_empty());
    }

    #[test]
    fn injected_fault_is_reported_with_geometry() {
        for op in OPS {
            let summary = run_verify(&VerifyConfig {
                seed: 7,
                cases: 3,
                inject_fault: Some(op.to_string()),
            });
            assert!(!summary.pass, "fault in {op} slipped through");
            let failed = summary.ops.iter().find(|o| o.op == op).unwrap();
            let failure = failed.failure.as_ref().unwrap();
            assert_eq!(failure.case, 0);
            assert!(failure.geometry.ih >= 4);
        }
    }

    #[test]
    fn summaries_are_reproducible() {
        let a = run_verify(&VerifyConfig {
            seed: 11,
            cases: 10,
            inject_fault: None,
        });
        let b = run_verify(&VerifyConfig {
            seed: 11,
            cases: 10,
            inject_fault: None,
        });
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
