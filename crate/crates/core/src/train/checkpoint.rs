//! Self-describing binary checkpoints.
//!
//! Layout (little-endian): magic `ENRNNCKP`, format version (u32), config JSON
//! length (u64) and bytes, record count (u64), then for each record in name order:
//! name length (u32), name bytes, kind tag (u8), and a kind-specific body.
//! `f64` tensors store ndim (u32), dims (u64 each) and values; `u64` arrays and raw
//! byte records store a length (u64) and their values. A SHA-256 digest of all
//! preceding bytes closes the file.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ENRNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

const TAG_F64: u8 = 0;
const TAG_U64: u8 = 1;
const TAG_BYTES: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    F64 { dims: Vec<usize>, data: Vec<f64> },
    U64(Vec<u64>),
    Bytes(Vec<u8>),
}

impl Record {
    pub fn matrix(m: &DenseMatrix) -> Self {
        Record::F64 { dims: vec![m.rows(), m.cols()], data: m.data().to_vec() }
    }

    pub fn vector(v: &[f64]) -> Self {
        Record::F64 { dims: vec![v.len()], data: v.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub records: BTreeMap<String, Record>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(config: TrainConfig) -> Self {
        Self { config, records: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, record: Record) {
        self.records.insert(name.into(), record);
    }

    fn get(&self, name: &str) -> Result<&Record> {
        self.records.get(name).ok_or_else(|| corrupt(format!("missing record `{name}`")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.records.contains_key(name)
    }

    pub fn matrix(&self, name: &str) -> Result<DenseMatrix> {
        match self.get(name)? {
            Record::F64 { dims, data } if dims.len() == 2 => {
                DenseMatrix::new(dims[0], dims[1], data.clone()).map_err(|e| corrupt(format!("`{name}`: {e}")))
            }
            _ => Err(corrupt(format!("`{name}` is not a matrix"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        match self.get(name)? {
            Record::F64 { dims, data } if dims.len() == 1 => Ok(data.clone()),
            _ => Err(corrupt(format!("`{name}` is not a vector"))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<Vec<u64>> {
        match self.get(name)? {
            Record::U64(v) => Ok(v.clone()),
            _ => Err(corrupt(format!("`{name}` is not a u64 array"))),
        }
    }

    pub fn bytes(&self, name: &str) -> Result<Vec<u8>> {
        match self.get(name)? {
            Record::Bytes(v) => Ok(v.clone()),
            _ => Err(corrupt(format!("`{name}` is not a byte record"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config = serde_json::to_string(&self.config).expect("config serializes");
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for (name, record) in &self.records {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match record {
                Record::F64 { dims, data } => {
                    out.push(TAG_F64);
                    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
                    for &d in dims {
                        out.extend_from_slice(&(d as u64).to_le_bytes());
                    }
                    for &x in data {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Record::U64(values) => {
                    out.push(TAG_U64);
                    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
                    for &x in values {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Record::Bytes(bytes) => {
                    out.push(TAG_BYTES);
                    out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
                    out.extend_from_slice(bytes);
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() + 4 + 32 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {version} (expected {CHECKPOINT_VERSION})")));
        }
        let config_len = r.len()?;
        let config_text = std::str::from_utf8(r.take(config_len)?).map_err(|_| corrupt("config is not UTF-8"))?;
        let config: TrainConfig = serde_json::from_str(config_text).map_err(|e| corrupt(format!("config: {e}")))?;
        let count = r.len()?;
        let mut records = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| corrupt("record name is not UTF-8"))?.to_string();
            let record = match r.u8()? {
                TAG_F64 => {
                    let ndim = r.u32()? as usize;
                    let dims = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
                    let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| corrupt("dims overflow"))?;
                    let data = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    Record::F64 { dims, data }
                }
                TAG_U64 => {
                    let n = r.len()?;
                    Record::U64((0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?)
                }
                TAG_BYTES => {
                    let n = r.len()?;
                    Record::Bytes(r.take(n)?.to_vec())
                }
                tag => return Err(corrupt(format!("unknown record kind {tag}"))),
            };
            records.insert(name, record);
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes after records"));
        }
        Ok(Self { config, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated file"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflow"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
