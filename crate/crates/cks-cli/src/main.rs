use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cks_cli::analyze::{points_to_csv, run_analyze, AnalyzeKind, UsageError};
use cks_cli::bench::{rows_to_csv, rows_to_json, run_bench, BenchConfig, OpFilter};
use cks_cli::suites::{suite_cases, BenchCase};
use cks_cli::verify::{run_verify, VerifyConfig};
use cks_core::layer::{smoke_train, Backend, TrainConfig};

/// Zero-skipping convolution operators: verification, instrumented
/// benchmarks and zero-proportion analytics.
#[derive(Parser)]
#[command(name = "cks", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized oracle-equivalence and invariant sweep.
    Verify {
        /// Seed of the geometry/data stream.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random geometries.
        #[arg(long, default_value_t = 200)]
        cases: usize,
        /// Test fixture: corrupt the named operator to exercise the
        /// failure path.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Time the operators over a case suite and report MAC-exact rows.
    Bench {
        #[arg(long, value_enum, default_value_t = SuiteArg::Paper3x3)]
        suite: SuiteArg,
        /// Geometry file (JSON array) for --suite custom.
        #[arg(long)]
        geometry: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OpArg::All)]
        op: OpArg,
        /// Timed repetitions per operator after one warm-up pass.
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
        dtype: DtypeArg,
        /// Worker threads for operator-internal parallelism.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Fixed accumulation orders everywhere (serial segment folds).
        #[arg(long, default_value_t = false)]
        deterministic: bool,
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// Emit a zero-proportion curve as CSV.
    Analyze {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Sweep range A:B (inclusive; descending when A > B).
        #[arg(long)]
        range: String,
        /// Fixed parameters, repeatable: `p=PADDING` or `o=OUTPUT_SIZE`.
        #[arg(long = "fixed")]
        fixed: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the teacher-student training smoke loop and emit (step, loss).
    Train {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        lr: f64,
        #[arg(long, value_enum, default_value_t = BackendArg::Cks)]
        backend: BackendArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    #[value(name = "paper-3x3")]
    Paper3x3,
    #[value(name = "paper-5x5")]
    Paper5x5,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum OpArg {
    Conv,
    Deconv,
    Dilated,
    All,
}

impl From<OpArg> for OpFilter {
    fn from(op: OpArg) -> Self {
        match op {
            OpArg::Conv => OpFilter::Conv,
            OpArg::Deconv => OpFilter::Deconv,
            OpArg::Dilated => OpFilter::Dilated,
            OpArg::All => OpFilter::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    PadFraction,
    InsertFraction,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Cks,
    Naive,
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn usage_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Verify {
            seed,
            cases,
            inject_fault,
        } => {
            let summary = run_verify(&VerifyConfig {
                seed,
                cases,
                inject_fault,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(if summary.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Bench {
            suite,
            geometry,
            op,
            reps,
            dtype,
            threads,
            deterministic,
            out,
            format,
        } => {
            if reps == 0 {
                return Err(usage_error("--reps must be at least 1"));
            }
            let (suite_name, cases) = match suite {
                SuiteArg::Paper3x3 => ("paper-3x3".to_string(), suite_cases("paper-3x3")?),
                SuiteArg::Paper5x5 => ("paper-5x5".to_string(), suite_cases("paper-5x5")?),
                SuiteArg::Custom => {
                    let path = geometry
                        .ok_or_else(|| usage_error("--suite custom requires --geometry FILE"))?;
                    let cases: Vec<BenchCase> = cks_cli::fixtures::load_geometries(&path)?
                        .into_iter()
                        .enumerate()
                        .map(|(i, geometry)| BenchCase {
                            name: format!("custom{}", i + 1),
                            geometry,
                        })
                        .collect();
                    if cases.is_empty() {
                        return Err(usage_error("geometry file holds no cases"));
                    }
                    ("custom".to_string(), cases)
                }
            };
            let config = BenchConfig {
                suite: suite_name,
                cases,
                op: op.into(),
                reps,
                f64_elements: matches!(dtype, DtypeArg::F64),
                threads: threads.max(1),
                deterministic,
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .context("building worker pool")?;
            let rows = pool.install(|| run_bench(&config));
            let content = match format {
                FormatArg::Csv => rows_to_csv(&rows),
                FormatArg::Json => rows_to_json(&rows)?,
            };
            write_output(&out, &content)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            kind,
            range,
            fixed,
            out,
        } => {
            let kind = match kind {
                KindArg::PadFraction => AnalyzeKind::PadFraction,
                KindArg::InsertFraction => AnalyzeKind::InsertFraction,
            };
            let points = run_analyze(kind, &range, &fixed)?;
            write_output(&out, &points_to_csv(kind, &points))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            seed,
            steps,
            lr,
            backend,
            out,
        } => {
            let config = TrainConfig {
                seed,
                steps,
                lr,
                backend: match backend {
                    BackendArg::Cks => Backend::ZeroSkip,
                    BackendArg::Naive => Backend::Reference,
                },
                ..TrainConfig::default()
            };
            let trace = smoke_train(&config).map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut csv = String::from("step,loss\n");
            for (step, loss) in &trace {
                csv.push_str(&format!("{step},{loss}\n"));
            }
            write_output(&out, &csv)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
