//! Built-in benchmark suites.
//!
//! Two ladders of 8 cases each, one per filter size. Spatial extents
//! shrink from the first to the last case while channels and batch grow,
//! so the padded-zero proportion rises across the ladder. Every spatial
//! extent is even and the stride is 2, which keeps the split-kernel
//! deconvolution on its exact 1/4 MAC ratio. Sizes are desk scale: the
//! largest case stays well under ten seconds per operator on one CPU
//! core, brute-force baselines included.

use anyhow::{bail, Result};
use cks_core::{ConvGeometry, GeometrySpec};

#[derive(Debug, Clone)]
pub struct BenchCase {
    pub name: String,
    pub geometry: ConvGeometry,
}

/// `(n, spatial, ic, oc)` ladder shared by both suites.
const LADDER: [(usize, usize, usize, usize); 8] = [
    (1, 56, 4, 8),
    (1, 48, 8, 8),
    (2, 40, 8, 12),
    (2, 32, 12, 16),
    (4, 24, 16, 16),
    (4, 16, 16, 24),
    (8, 12, 24, 32),
    (8, 8, 32, 32),
];

fn ladder_cases(f: usize, p: usize) -> Result<Vec<BenchCase>> {
    LADDER
        .iter()
        .enumerate()
        .map(|(i, &(n, side, ic, oc))| {
            let geometry = GeometrySpec {
                n,
                ih: side,
                iw: side,
                ic,
                oc,
                fh: f,
                fw: f,
                sh: 2,
                sw: 2,
                ph: p,
                pw: p,
            }
            .infer()
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            Ok(BenchCase {
                name: format!("case{}", i + 1),
                geometry,
            })
        })
        .collect()
}

/// Cases of a named suite; `custom` geometries come from a file and are
/// handled by the caller.
pub fn suite_cases(suite: &str) -> Result<Vec<BenchCase>> {
    match suite {
        "paper-3x3" => ladder_cases(3, 1),
        "paper-5x5" => ladder_cases(5, 2),
        other => bail!("unknown suite {other:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_have_eight_shrinking_cases() {
        for suite in ["paper-3x3", "paper-5x5"] {
            let cases = suite_cases(suite).unwrap();
            assert_eq!(cases.len(), 8);
            for pair in cases.windows(2) {
                assert!(pair[0].geometry.ih() > pair[1].geometry.ih());
                assert!(
                    pair[0].geometry.n() * pair[0].geometry.ic()
                        <= pair[1].geometry.n() * pair[1].geometry.ic()
                );
            }
            // stride 2 over even extents keeps the split ratio exact
            for case in &cases {
                assert_eq!(case.geometry.ih() % 2, 0);
                assert_eq!(case.geometry.sh(), 2);
            }
        }
    }

    #[test]
    fn padded_fraction_grows_along_the_ladder() {
        let cases = suite_cases("paper-3x3").unwrap();
        let first = cases.first().unwrap().geometry.pad_zero_fraction();
        let last = cases.last().unwrap().geometry.pad_zero_fraction();
        assert!(last > first);
    }
}
