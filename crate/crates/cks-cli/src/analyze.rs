//! Zero-proportion curves behind `cks analyze`.
//!
//! Emits `(parameter, fraction)` rows from the geometry analytics:
//! the padded-zero proportion as the square input size sweeps (it grows
//! as feature maps shrink), and the non-zero-calculation fraction of the
//! inserted gradient as the stride sweeps (1 at unit stride, decaying
//! toward `1/(sh*sw)`).

use std::collections::HashMap;

use anyhow::Result;
use cks_core::GeometrySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyzeKind {
    PadFraction,
    InsertFraction,
}

impl AnalyzeKind {
    pub fn parameter_name(self) -> &'static str {
        match self {
            AnalyzeKind::PadFraction => "input",
            AnalyzeKind::InsertFraction => "stride",
        }
    }

    pub fn fraction_name(self) -> &'static str {
        match self {
            AnalyzeKind::PadFraction => "pad_zero_fraction",
            AnalyzeKind::InsertFraction => "nonzero_calc_fraction",
        }
    }
}

/// Marker for operator errors that should surface as usage errors
/// (exit status 2) rather than runtime failures.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Parses `A:B` into an inclusive sweep, descending when `A > B`.
pub fn parse_range(spec: &str) -> Result<Vec<usize>> {
    let (a, b) = spec
        .split_once(':')
        .ok_or_else(|| usage(format!("range {spec:?} is not of the form A:B")))?;
    let a: usize = a
        .trim()
        .parse()
        .map_err(|_| usage(format!("range start {a:?} is not a count")))?;
    let b: usize = b
        .trim()
        .parse()
        .map_err(|_| usage(format!("range end {b:?} is not a count")))?;
    if a == 0 || b == 0 {
        return Err(usage("range is empty: endpoints must be positive"));
    }
    Ok(if a <= b {
        (a..=b).collect()
    } else {
        (b..=a).rev().collect()
    })
}

fn parse_fixed(fixed: &[String]) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for item in fixed {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("fixed parameter {item:?} is not of the form k=v")))?;
        let v: usize = v
            .parse()
            .map_err(|_| usage(format!("fixed parameter value {v:?} is not a count")))?;
        map.insert(k.trim().to_string(), v);
    }
    Ok(map)
}

/// Sweeps the requested curve. `fixed` entries: `p=<padding>` for the
/// padding curve (default 1), `o=<output size>` for the insertion curve
/// (default 8).
pub fn run_analyze(
    kind: AnalyzeKind,
    range_spec: &str,
    fixed: &[String],
) -> Result<Vec<(usize, f64)>> {
    let sweep = parse_range(range_spec)?;
    let fixed = parse_fixed(fixed)?;
    for key in fixed.keys() {
        let known = match kind {
            AnalyzeKind::PadFraction => key == "p",
            AnalyzeKind::InsertFraction => key == "o",
        };
        if !known {
            return Err(usage(format!(
                "unknown fixed parameter {key:?} for this curve"
            )));
        }
    }

    let mut points = Vec::with_capacity(sweep.len());
    match kind {
        AnalyzeKind::PadFraction => {
            let p = fixed.get("p").copied().unwrap_or(1);
            for side in sweep {
                // any valid filter works, the fraction only reads I and p
                let g = GeometrySpec {
                    n: 1,
                    ih: side,
                    iw: side,
                    ic: 1,
                    oc: 1,
                    fh: (p + 1).max(3),
                    fw: (p + 1).max(3),
                    sh: 1,
                    sw: 1,
                    ph: p,
                    pw: p,
                }
                .infer()
                .map_err(|e| usage(format!("input {side} with padding {p}: {e}")))?;
                points.push((side, g.pad_zero_fraction()));
            }
        }
        AnalyzeKind::InsertFraction => {
            let o = fixed.get("o").copied().unwrap_or(8);
            if o == 0 {
                return Err(usage("fixed output size must be positive"));
            }
            for stride in sweep {
                // filter = stride and no padding give an output of exactly o
                let g = GeometrySpec {
                    n: 1,
                    ih: o * stride,
                    iw: o * stride,
                    ic: 1,
                    oc: 1,
                    fh: stride,
                    fw: stride,
                    sh: stride,
                    sw: stride,
                    ph: 0,
                    pw: 0,
                }
                .infer()
                .map_err(|e| usage(format!("stride {stride}: {e}")))?;
                debug_assert_eq!(g.oh(), o);
                points.push((stride, g.nonzero_calc_fraction()));
            }
        }
    }
    Ok(points)
}

pub fn points_to_csv(kind: AnalyzeKind, points: &[(usize, f64)]) -> String {
    let mut out = format!("{},{}\n", kind.parameter_name(), kind.fraction_name());
    for (param, fraction) in points {
        out.push_str(&format!("{param},{fraction}\n"));
    }
    out
}
