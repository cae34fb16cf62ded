//! JSON forms for geometries, small tensor fixtures and operator stats.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use cks_core::{ConvGeometry, GeometrySpec, OpStats, Scalar, Tensor4};

/// Geometry file record with the layer parameter names.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct GeometryJson {
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
}

impl From<&ConvGeometry> for GeometryJson {
    fn from(g: &ConvGeometry) -> Self {
        let s = g.spec();
        GeometryJson {
            n: s.n,
            ih: s.ih,
            iw: s.iw,
            ic: s.ic,
            oc: s.oc,
            fh: s.fh,
            fw: s.fw,
            sh: s.sh,
            sw: s.sw,
            ph: s.ph,
            pw: s.pw,
        }
    }
}

impl GeometryJson {
    pub fn infer(&self) -> Result<ConvGeometry> {
        GeometrySpec {
            n: self.n,
            ih: self.ih,
            iw: self.iw,
            ic: self.ic,
            oc: self.oc,
            fh: self.fh,
            fw: self.fw,
            sh: self.sh,
            sw: self.sw,
            ph: self.ph,
            pw: self.pw,
        }
        .infer()
        .map_err(|e| anyhow::anyhow!("{e}"))
    }
}

/// Loads a JSON array of geometry records and infers each one.
pub fn load_geometries(path: &Path) -> Result<Vec<ConvGeometry>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading geometry file {}", path.display()))?;
    let records: Vec<GeometryJson> =
        serde_json::from_str(&text).context("geometry file is not a JSON array of records")?;
    records.iter().map(|r| r.infer()).collect()
}

/// Small tensor fixture used by golden tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorJson {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

pub fn tensor_to_json<S: Scalar>(t: &Tensor4<S>) -> TensorJson {
    TensorJson {
        dims: t.dims(),
        data: t.data().iter().map(|v| v.to_f64()).collect(),
    }
}

pub fn tensor_from_json<S: Scalar>(j: &TensorJson) -> Result<Tensor4<S>> {
    Tensor4::from_vec(j.dims, j.data.iter().map(|&v| S::from_f64(v)).collect())
        .map_err(|e| anyhow::anyhow!("{e}"))
}

/// Stats in serialized form.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct StatsJson {
    pub macs: u64,
    pub zeros_skipped: u64,
}

impl From<OpStats> for StatsJson {
    fn from(s: OpStats) -> Self {
        StatsJson {
            macs: s.macs,
            zeros_skipped: s.zeros_skipped,
        }
    }
}
