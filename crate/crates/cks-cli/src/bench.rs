//! Timing harness behind `cks bench`.
//!
//! Each case times the brute-force baseline, the zero-skipping operator
//! and, where a matrix view exists, the lowered form, over a fixed-count
//! loop with one warm-up pass on a monotonic clock. MAC columns come from
//! the operators' own counters and never depend on timing, threads or
//! repetition count. For the split-kernel path the kernel pack is built
//! once before the timing loop, the way a training loop would hold it
//! across propagation steps.

use std::time::Instant;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use cks_core::gemm::{gemm_conv2d, partitioned_dilated_with, Reduction};
use cks_core::geometry::{select_gz, GzPolicy};
use cks_core::ops::{
    deconv_common_unit_stride, deconv_route, dispatch_conv, ks_deconv, ks_deconv_v2, ks_split,
    sk_dilated, sk_dilated_v2, DeconvRoute, DispatchPolicy,
};
use cks_core::oracle::{naive_conv2d, naive_deconv2d, naive_dilated_conv2d};
use cks_core::rng::SplitMix64;
use cks_core::{OpKind, OpStats, Scalar, Tensor4};

use crate::suites::BenchCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpFilter {
    Conv,
    Deconv,
    Dilated,
    All,
}

impl OpFilter {
    fn wants(self, kind: OpKind) -> bool {
        matches!(
            (self, kind),
            (OpFilter::All, _)
                | (OpFilter::Conv, OpKind::Conv)
                | (OpFilter::Deconv, OpKind::Deconv)
                | (OpFilter::Dilated, OpKind::Dilated)
        )
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub suite: String,
    pub cases: Vec<BenchCase>,
    pub op: OpFilter,
    pub reps: usize,
    pub f64_elements: bool,
    /// Worker count the caller installed; used to bound the segment count
    /// of the partitioned reduction so reports do not depend on pool
    /// introspection.
    pub threads: usize,
    pub deterministic: bool,
}

/// One (case, operator, implementation) measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub suite: String,
    pub case: String,
    pub op: String,
    pub implementation: String,
    pub dtype: String,
    pub n: usize,
    pub ih: usize,
    pub iw: usize,
    pub ic: usize,
    pub oc: usize,
    pub fh: usize,
    pub fw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
    pub reps: usize,
    pub mean_time_s: f64,
    /// Analytic complexity of the operator (batch factor included).
    pub flops: u64,
    /// Per-image reading of the same formula (differs only for the
    /// filter-gradient operator).
    pub flops_per_image: u64,
    pub gflops: f64,
    pub macs: u64,
    pub zeros_skipped: u64,
}

pub const CSV_HEADER: &str = "suite,case,op,implementation,dtype,n,ih,iw,ic,oc,fh,fw,sh,sw,ph,pw,oh,ow,reps,mean_time_s,flops,flops_per_image,gflops,macs,zeros_skipped";

impl BenchRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.suite,
            self.case,
            self.op,
            self.implementation,
            self.dtype,
            self.n,
            self.ih,
            self.iw,
            self.ic,
            self.oc,
            self.fh,
            self.fw,
            self.sh,
            self.sw,
            self.ph,
            self.pw,
            self.oh,
            self.ow,
            self.reps,
            self.mean_time_s,
            self.flops,
            self.flops_per_image,
            self.gflops,
            self.macs,
            self.zeros_skipped
        )
    }
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn rows_to_json(rows: &[BenchRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}

/// Mean seconds per call over `reps` calls after one warm-up pass.
fn time_reps(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    let start = Instant::now();
    for _ in 0..reps {
        f();
    }
    start.elapsed().as_secs_f64() / reps as f64
}

struct RowSink<'a> {
    config: &'a BenchConfig,
    case: &'a BenchCase,
    dtype: &'static str,
    rows: Vec<BenchRow>,
}

impl RowSink<'_> {
    fn push(&mut self, kind: OpKind, implementation: &str, mean_time_s: f64, stats: OpStats) {
        let g = &self.case.geometry;
        let flops = g.flops(kind);
        self.rows.push(BenchRow {
            suite: self.config.suite.clone(),
            case: self.case.name.clone(),
            op: kind.name().to_string(),
            implementation: implementation.to_string(),
            dtype: self.dtype.to_string(),
            n: g.n(),
            ih: g.ih(),
            iw: g.iw(),
            ic: g.ic(),
            oc: g.oc(),
            fh: g.fh(),
            fw: g.fw(),
            sh: g.sh(),
            sw: g.sw(),
            ph: g.ph(),
            pw: g.pw(),
            oh: g.oh(),
            ow: g.ow(),
            reps: self.config.reps,
            mean_time_s,
            flops,
            flops_per_image: g.flops_per_image(kind),
            gflops: flops as f64 / (mean_time_s * 1e9),
            macs: stats.macs,
            zeros_skipped: stats.zeros_skipped,
        });
    }
}

fn bench_case<S: Scalar>(config: &BenchConfig, case: &BenchCase, seed: u64) -> Vec<BenchRow> {
    let g = &case.geometry;
    let policy = DispatchPolicy::default();
    let mut rng = SplitMix64::new(seed);
    let mut x = Tensor4::<S>::zeros(g.input_dims());
    let mut w = Tensor4::<S>::zeros(g.filter_dims());
    let mut dy = Tensor4::<S>::zeros(g.output_dims());
    x.fill_uniform(&mut rng, -1.0, 1.0);
    w.fill_uniform(&mut rng, -1.0, 1.0);
    dy.fill_uniform(&mut rng, -1.0, 1.0);

    let mut sink = RowSink {
        config,
        case,
        dtype: if S::WIDTH == 8 { "f64" } else { "f32" },
        rows: Vec::new(),
    };
    let reps = config.reps;

    if config.op.wants(OpKind::Conv) {
        let (_, stats) = naive_conv2d(&x, &w, g).unwrap();
        let t = time_reps(reps, || {
            naive_conv2d(&x, &w, g).unwrap();
        });
        sink.push(OpKind::Conv, "naive", t, stats);

        let (_, stats) = dispatch_conv(&x, &w, g, &policy).unwrap();
        let t = time_reps(reps, || {
            dispatch_conv(&x, &w, g, &policy).unwrap();
        });
        sink.push(OpKind::Conv, "cks", t, stats);

        let t = time_reps(reps, || {
            gemm_conv2d(&x, &w, g).unwrap();
        });
        // the lowering materializes every oracle term
        let stats = OpStats::new(g.oracle_macs(OpKind::Conv), 0);
        sink.push(OpKind::Conv, "gemm", t, stats);
    }

    if config.op.wants(OpKind::Deconv) {
        let (_, stats) = naive_deconv2d(&dy, &w, g).unwrap();
        let t = time_reps(reps, || {
            naive_deconv2d(&dy, &w, g).unwrap();
        });
        sink.push(OpKind::Deconv, "naive", t, stats);

        // kernel pack built outside the loop, as in looped propagation;
        // base and trimmed variants are separate report series
        if let DeconvRoute::CommonUnitStride = deconv_route(g, &policy) {
            let (_, stats) = deconv_common_unit_stride(&dy, &w, g).unwrap();
            let t = time_reps(reps, || {
                deconv_common_unit_stride(&dy, &w, g).unwrap();
            });
            sink.push(OpKind::Deconv, "cks", t, stats);
        } else {
            let ks = ks_split(&w, g).unwrap();
            let (_, stats) = ks_deconv(&dy, &ks, g).unwrap();
            let t = time_reps(reps, || {
                ks_deconv(&dy, &ks, g).unwrap();
            });
            sink.push(OpKind::Deconv, "cks", t, stats);

            let (_, stats) = ks_deconv_v2(&dy, &ks, g).unwrap();
            let t = time_reps(reps, || {
                ks_deconv_v2(&dy, &ks, g).unwrap();
            });
            sink.push(OpKind::Deconv, "cks-v2", t, stats);
        }
    }

    if config.op.wants(OpKind::Dilated) {
        let (_, stats) = naive_dilated_conv2d(&x, &dy, g).unwrap();
        let t = time_reps(reps, || {
            naive_dilated_conv2d(&x, &dy, g).unwrap();
        });
        sink.push(OpKind::Dilated, "naive", t, stats);

        let (_, stats) = sk_dilated(&x, &dy, g).unwrap();
        let t = time_reps(reps, || {
            sk_dilated(&x, &dy, g).unwrap();
        });
        sink.push(OpKind::Dilated, "cks", t, stats);

        let (_, stats) = sk_dilated_v2(&x, &dy, g).unwrap();
        let t = time_reps(reps, || {
            sk_dilated_v2(&x, &dy, g).unwrap();
        });
        sink.push(OpKind::Dilated, "cks-v2", t, stats);

        // segmented reduction, segment count from the block-count rule
        let g_k = (g.n() * g.oh() * g.ow()) as u64;
        let n_alpha = (g.n() * g.oh() * g.ow()) as u64;
        let n_beta = (g.n() * g.ih() * g.iw()) as u64;
        let n_gamma = (g.oc() * g.fh() * g.fw() * g.ic()) as u64;
        let policy_gz = GzPolicy {
            lower_bound: 1,
            upper_bound: config.threads.max(1).min(g_k as usize),
        };
        let gz = select_gz(n_alpha, n_beta, n_gamma, policy_gz);
        let reduction = if config.deterministic {
            Reduction::Serial
        } else {
            Reduction::Tree
        };
        let (_, stats) = partitioned_dilated_with(&x, &dy, g, gz, reduction).unwrap();
        let t = time_reps(reps, || {
            partitioned_dilated_with(&x, &dy, g, gz, reduction).unwrap();
        });
        sink.push(OpKind::Dilated, "gemm", t, stats);
    }

    sink.rows
}

/// Runs the configured suite. Input data is seeded per case, so MAC and
/// flop columns are identical across runs, thread counts and repetition
/// counts; only the timing columns vary.
pub fn run_bench(config: &BenchConfig) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for (i, case) in config.cases.iter().enumerate() {
        let seed = 0x5EED_0000 + i as u64;
        let case_rows = if config.f64_elements {
            bench_case::<f64>(config, case, seed)
        } else {
            bench_case::<f32>(config, case, seed)
        };
        rows.extend(case_rows);
    }
    rows
}
