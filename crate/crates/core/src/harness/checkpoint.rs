//! Checkpoint container: magic `APXC`, u32 version, 32-byte config digest,
//! algorithm tag, named APXN parameter blobs, and a bincode state payload.
//! Little-endian throughout.

use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::neural::{deserialize_params, serialize_params, ParameterSet};

pub const MAGIC: &[u8; 4] = b"APXC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub digest: [u8; 32],
    pub algorithm: String,
    pub blobs: Vec<(String, Vec<u8>)>,
    pub state: Vec<u8>,
}

pub fn digest_hex(d: &[u8; 32]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptLength(format!("checkpoint truncated in {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::CorruptLength(format!("{what} is not UTF-8")))
    }
}

impl Checkpoint {
    pub fn new<S: Serialize>(digest: [u8; 32], algorithm: &str, params: &[(&str, &ParameterSet)], state: &S) -> Result<Self> {
        Ok(Self {
            digest,
            algorithm: algorithm.to_string(),
            blobs: params
                .iter()
                .map(|(name, p)| (name.to_string(), serialize_params(p)))
                .collect(),
            state: bincode::serialize(state).map_err(|e| Error::Config(format!("state encoding: {e}")))?,
        })
    }

    pub fn params(&self, name: &str) -> Result<ParameterSet> {
        let (_, bytes) = self
            .blobs
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::CorruptLength(format!("checkpoint has no parameter blob {name}")))?;
        Ok(deserialize_params(bytes)?.params)
    }

    pub fn state<S: DeserializeOwned>(&self) -> Result<S> {
        bincode::deserialize(&self.state).map_err(|e| Error::CorruptLength(format!("state decoding: {e}")))
    }

    /// Rejects a checkpoint written under a different configuration.
    pub fn check_digest(&self, digest: &[u8; 32]) -> Result<()> {
        if &self.digest != digest {
            return Err(Error::DigestMismatch {
                checkpoint: digest_hex(&self.digest),
                config: digest_hex(digest),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&(self.algorithm.len() as u32).to_le_bytes());
        out.extend_from_slice(self.algorithm.as_bytes());
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for (name, blob) in &self.blobs {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
            out.extend_from_slice(blob);
        }
        out.extend_from_slice(&(self.state.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.state);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf, pos: 0 };
        if c.take(4, "magic")? != MAGIC {
            return Err(Error::BadMagic { expected: "APXC" });
        }
        let version = c.u32("version")?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                supported: VERSION,
            });
        }
        let digest: [u8; 32] = c.take(32, "digest")?.try_into().unwrap();
        let algorithm = c.string("algorithm")?;
        let count = c.u32("blob count")? as usize;
        let mut blobs = Vec::with_capacity(count.min(16));
        for _ in 0..count {
            let name = c.string("blob name")?;
            let n = c.u64("blob length")? as usize;
            blobs.push((name, c.take(n, "blob")?.to_vec()));
        }
        let n = c.u64("state length")? as usize;
        let state = c.take(n, "state")?.to_vec();
        if c.pos != buf.len() {
            return Err(Error::CorruptLength("trailing bytes after checkpoint state".into()));
        }
        Ok(Self {
            digest,
            algorithm,
            blobs,
            state,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("apx.tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_params, NetworkSpec};

    fn sample() -> Checkpoint {
        let p = init_params(&NetworkSpec::feature_torso(4, 6, 2, 0), 3).unwrap();
        Checkpoint::new([7u8; 32], "dqn", &[("online", &p), ("target", &p)], &(42u64, vec![1.5f64, -2.0])).unwrap()
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        let state: (u64, Vec<f64>) = back.state().unwrap();
        assert_eq!(state, (42, vec![1.5, -2.0]));
        assert_eq!(back.params("online").unwrap().flat_values(), back.params("target").unwrap().flat_values());
    }

    #[test]
    fn digest_mismatch_rejected() {
        let c = sample();
        assert!(c.check_digest(&[7u8; 32]).is_ok());
        assert!(matches!(c.check_digest(&[8u8; 32]), Err(Error::DigestMismatch { .. })));
    }

    #[test]
    fn version_and_truncation_errors() {
        let mut bytes = sample().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::CorruptLength(_))
        ));
        bytes[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::VersionMismatch { found: 9, .. })));
    }
}
