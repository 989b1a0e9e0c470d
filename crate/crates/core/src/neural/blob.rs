//! Parameter blob: magic `APXN`, u32 version, u32 tensor count, then per
//! tensor a u32 name length, UTF-8 name, u32 rank, u32 dims and
//! little-endian f64 values. Version 2 appends a u64 FNV-1a checksum of all
//! preceding bytes; version 1 blobs (no checksum) are still readable.

use super::params::ParameterSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"APXN";
pub const VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedParams {
    pub params: ParameterSet,
    pub version: u32,
    /// Set when the blob was written by an older format version.
    pub note: Option<String>,
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn write_body(params: &ParameterSet, version: u32, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.params() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn serialize_params(params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::new();
    write_body(params, VERSION, &mut out);
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

/// Writes the legacy version 1 layout.
pub fn serialize_params_v1(params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::new();
    write_body(params, 1, &mut out);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptLength(format!(
                "need {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decodes a blob and returns the parameter set plus any version note. The
/// whole buffer must be consumed.
pub fn deserialize_params(buf: &[u8]) -> Result<DecodedParams> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic { expected: "APXN" });
    }
    let version = r.u32("version")?;
    if version == 0 || version > VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: VERSION,
        });
    }
    let count = r.u32("tensor count")? as usize;
    let mut named = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::CorruptLength("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::CorruptLength(format!("tensor {name} is too large")))?;
        let data = r
            .take(n, "tensor data")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|_| Error::CorruptLength(format!("tensor {name} has a zero dimension")))?;
        named.push((name, tensor));
    }
    let note = if version == 1 {
        Some("read legacy version 1 parameter blob (no checksum)".to_string())
    } else {
        let body_end = r.pos;
        let stored = u64::from_le_bytes(r.take(8, "checksum")?.try_into().unwrap());
        if stored != fnv1a(&buf[..body_end]) {
            return Err(Error::CorruptLength("parameter blob checksum mismatch".into()));
        }
        None
    };
    if r.pos != buf.len() {
        return Err(Error::CorruptLength(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(DecodedParams {
        params: ParameterSet::new(named)?,
        version,
        note,
    })
}
