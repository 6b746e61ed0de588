use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::artifact::atomic_write;

pub const MAGIC: &[u8; 5] = b"ILBK1";
pub const VERSION: u32 = 1;

pub const SECTOR_RADIAL: u8 = 0;
pub const SECTOR_FULL: u8 = 1;

/// Fixed-layout little-endian header in front of the row-major float payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheHeader {
    pub sector: u8,
    /// Matrix dimension: Nr for the radial sector, N^3 for the full grid.
    pub n: u64,
    /// Grid half-width in thermal widths.
    pub l: f64,
    pub m: f64,
    pub m1: f64,
    pub eps: f64,
    pub theta1: f64,
    pub u1: [f64; 3],
    pub norm_c: f64,
    pub c_sigma: f64,
}

impl CacheHeader {
    fn floats(&self) -> [f64; 10] {
        [
            self.l, self.m, self.m1, self.eps, self.theta1, self.u1[0], self.u1[1], self.u1[2],
            self.norm_c, self.c_sigma,
        ]
    }
}

/// Sidecar metadata next to the binary file; repeats the resolved
/// normalization so the provenance is readable without parsing the binary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheMeta {
    pub config_hash: String,
    pub sector: String,
    pub n: usize,
    pub norm_c: f64,
    pub c_sigma: f64,
    pub payload_checksum: String,
    pub sinkhorn_iterations: usize,
    pub sinkhorn_residual: f64,
    pub raw_equilibrium_residual: f64,
    pub rescale_min: f64,
    pub rescale_max: f64,
}

/// Payload is a flat float block: the n x n operator matrix row-major, or a
/// length-n state vector for final-state dumps in the same format.
pub fn write(path: &Path, header: &CacheHeader, payload: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(MAGIC.len() + 4 + 1 + 8 + 80 + payload.len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.push(header.sector);
    bytes.extend_from_slice(&header.n.to_le_bytes());
    for v in header.floats() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

fn read_raw(path: &Path, payload_len: impl Fn(u64) -> u64) -> Result<(CacheHeader, Vec<f64>)> {
    let bytes =
        fs::read(path).with_context(|| format!("cannot read operator cache {}", path.display()))?;
    let header_len = MAGIC.len() + 4 + 1 + 8 + 80;
    if bytes.len() < header_len || &bytes[..5] != MAGIC {
        bail!("{} is not an operator cache", path.display());
    }
    let version = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    if version != VERSION {
        bail!("operator cache version {version} unsupported (expected {VERSION}) in {}", path.display());
    }
    let sector = bytes[9];
    if sector != SECTOR_RADIAL && sector != SECTOR_FULL {
        bail!("operator cache {} carries unknown sector tag {sector}", path.display());
    }
    let n = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let mut floats = [0.0f64; 10];
    for (k, v) in floats.iter_mut().enumerate() {
        let at = 18 + 8 * k;
        *v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    }
    let expected = header_len as u64 + 8 * payload_len(n);
    if bytes.len() as u64 != expected {
        bail!("operator cache {} is truncated: {} bytes, expected {expected}", path.display(), bytes.len());
    }
    let payload = bytes[header_len..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let header = CacheHeader {
        sector,
        n,
        l: floats[0],
        m: floats[1],
        m1: floats[2],
        eps: floats[3],
        theta1: floats[4],
        u1: [floats[5], floats[6], floats[7]],
        norm_c: floats[8],
        c_sigma: floats[9],
    };
    Ok((header, payload))
}

pub fn read_matrix(path: &Path) -> Result<(CacheHeader, Vec<f64>)> {
    read_raw(path, |n| n * n)
}

pub fn read_vector(path: &Path) -> Result<(CacheHeader, Vec<f64>)> {
    read_raw(path, |n| n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("op.ilbk");
        let header = CacheHeader {
            sector: SECTOR_RADIAL,
            n: 3,
            l: 6.0,
            m: 1.0,
            m1: 1.0,
            eps: 0.5,
            theta1: 1.0,
            u1: [0.0, -0.0, 1.5],
            norm_c: 0.5,
            c_sigma: core::f64::consts::PI,
        };
        let payload: Vec<f64> = (0..9).map(|k| (k as f64).sin() * 1e-3).collect();
        write(&path, &header, &payload).unwrap();
        let (h2, p2) = read_matrix(&path).unwrap();
        assert_eq!(header, h2);
        assert!(payload.iter().zip(&p2).all(|(a, b)| a.to_bits() == b.to_bits()));

        let state = dir.path().join("state.ilbk");
        write(&state, &header, &payload[..3]).unwrap();
        let (h3, p3) = read_vector(&state).unwrap();
        assert_eq!(header, h3);
        assert_eq!(p3.len(), 3);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("op.ilbk");
        let header = CacheHeader {
            sector: SECTOR_FULL,
            n: 2,
            l: 6.0,
            m: 1.0,
            m1: 1.0,
            eps: 0.5,
            theta1: 1.0,
            u1: [0.0; 3],
            norm_c: 0.5,
            c_sigma: core::f64::consts::PI,
        };
        write(&path, &header, &[0.0; 4]).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[5] = 9; // bump the version field
        fs::write(&path, &bytes).unwrap();
        let err = read_matrix(&path).unwrap_err().to_string();
        assert!(err.contains("version"), "unexpected error: {err}");
    }
}
