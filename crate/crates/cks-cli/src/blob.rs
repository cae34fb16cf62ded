//! Flat binary tensor format.
//!
//! Layout: magic bytes `CKS1`, then rank and every extent as little-endian
//! u64, then the elements as little-endian scalars, last axis fastest.
//! The element width is the scalar type's; readers check that the payload
//! length matches the extents.

use anyhow::{bail, Context, Result};
use cks_core::{Scalar, Tensor4, Tensor6};

pub const MAGIC: &[u8; 4] = b"CKS1";

/// Scalars that can cross the serialization boundary.
pub trait BlobScalar: Scalar {
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl BlobScalar for f32 {
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl BlobScalar for f64 {
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().unwrap())
    }
}

fn write_header(rank: u64, extents: &[usize], out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rank.to_le_bytes());
    for &e in extents {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
}

/// Parses the header and returns the extents and the payload offset.
fn read_header(bytes: &[u8], expect_rank: usize) -> Result<(Vec<usize>, usize)> {
    if bytes.len() < 4 + 8 || &bytes[..4] != MAGIC {
        bail!("not a tensor blob: bad magic");
    }
    let rank = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    if rank != expect_rank {
        bail!("rank {rank} where {expect_rank} was expected");
    }
    let header = 12 + 8 * rank;
    if bytes.len() < header {
        bail!("truncated header");
    }
    let mut extents = Vec::with_capacity(rank);
    for axis in 0..rank {
        let off = 12 + 8 * axis;
        extents.push(u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize);
    }
    Ok((extents, header))
}

fn read_payload<S: BlobScalar>(bytes: &[u8], offset: usize, count: usize) -> Result<Vec<S>> {
    let want = count * S::WIDTH;
    let payload = &bytes[offset..];
    if payload.len() != want {
        bail!(
            "payload is {} bytes, extents require {want} at {}-byte elements",
            payload.len(),
            S::WIDTH
        );
    }
    Ok(payload.chunks_exact(S::WIDTH).map(S::read_le).collect())
}

pub fn write_tensor4<S: BlobScalar>(t: &Tensor4<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * 4 + t.len() * S::WIDTH);
    write_header(4, &t.dims(), &mut out);
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn read_tensor4<S: BlobScalar>(bytes: &[u8]) -> Result<Tensor4<S>> {
    let (extents, offset) = read_header(bytes, 4)?;
    let dims = [extents[0], extents[1], extents[2], extents[3]];
    let data = read_payload(bytes, offset, dims.iter().product())?;
    Tensor4::from_vec(dims, data).context("inconsistent blob")
}

pub fn write_tensor6<S: BlobScalar>(t: &Tensor6<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * 6 + t.len() * S::WIDTH);
    write_header(6, &t.dims(), &mut out);
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn read_tensor6<S: BlobScalar>(bytes: &[u8]) -> Result<Tensor6<S>> {
    let (extents, offset) = read_header(bytes, 6)?;
    let dims = [
        extents[0], extents[1], extents[2], extents[3], extents[4], extents[5],
    ];
    let data = read_payload(bytes, offset, dims.iter().product())?;
    Tensor6::from_vec(dims, data).context("inconsistent blob")
}
