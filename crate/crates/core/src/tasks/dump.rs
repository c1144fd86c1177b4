use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const ENR1_MAGIC: &[u8; 4] = b"ENR1";

/// A tensor read back from an `ENR1` file.
#[derive(Clone, Debug, PartialEq)]
pub struct Enr1Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

/// Writes `ENR1`, the number of dimensions, each dimension (u64), then the row-major payload, all little-endian.
pub fn write_enr1(path: &Path, dims: &[usize], data: &[f64]) -> Result<()> {
    if dims.iter().product::<usize>() != data.len() {
        return Err(Error::contract("write_enr1: payload does not match dimensions"));
    }
    let mut buf = Vec::with_capacity(12 + 8 * (dims.len() + data.len()));
    buf.extend_from_slice(ENR1_MAGIC);
    buf.extend_from_slice(&(dims.len() as u64).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_enr1(path: &Path) -> Result<Enr1Tensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |msg: &str| Error::Config(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[..4] != ENR1_MAGIC {
        return Err(bad("not an ENR1 file"));
    }
    let word = |i: usize| -> Option<u64> { bytes.get(i..i + 8).map(|b| u64::from_le_bytes(b.try_into().unwrap())) };
    let ndim = word(4).ok_or_else(|| bad("truncated header"))? as usize;
    let mut dims = Vec::with_capacity(ndim.min(16));
    for k in 0..ndim {
        dims.push(word(12 + 8 * k).ok_or_else(|| bad("truncated header"))? as usize);
    }
    let start = 12 + 8 * ndim;
    let count: usize = dims.iter().product();
    if bytes.len() != start + 8 * count {
        return Err(bad("payload length does not match dimensions"));
    }
    let data = bytes[start..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Enr1Tensor { dims, data })
}
