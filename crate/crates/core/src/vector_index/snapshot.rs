//! Little-endian binary snapshot:
//!
//! ```text
//! magic[8] version:u32 d:u32 m:u32 ef_c:u32 ef_s:u32 lambda:f64 seed:u64
//! rng_word_pos:u128 count:u32 entry:u32 (u32::MAX = none)
//! per node: name_len:u32 name[..] level:u32 vector[d]:f64
//!           per layer 0..=level: degree:u32 neighbour:u32*
//! ```

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{HnswIndex, IndexParams};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"IOTAHNSW";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an index snapshot")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("truncated or corrupt snapshot: {0}")]
    Corrupt(&'static str),
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.buf.len() < n {
            return Err(SnapshotError::Corrupt("unexpected end"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u128(&mut self) -> Result<u128, SnapshotError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_bits(self.u64()?))
    }
}

impl HnswIndex {
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.len() * (self.dimension * 8 + 64));
        out.extend_from_slice(SNAPSHOT_MAGIC);
        for v in [
            SNAPSHOT_VERSION,
            self.dimension as u32,
            self.params.m as u32,
            self.params.ef_construction as u32,
            self.params.ef_search as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.params.level_lambda.to_bits().to_le_bytes());
        out.extend_from_slice(&self.params.seed.to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.entry_point.unwrap_or(u32::MAX).to_le_bytes());
        for i in 0..self.len() {
            let name = self.names[i].as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&(self.links[i].len() as u32 - 1).to_le_bytes());
            for x in &self.vectors[i] {
                out.extend_from_slice(&x.to_bits().to_le_bytes());
            }
            for layer in &self.links[i] {
                out.extend_from_slice(&(layer.len() as u32).to_le_bytes());
                for n in layer {
                    out.extend_from_slice(&n.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Reader { buf: bytes };
        if r.take(8)? != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version(version));
        }
        let dimension = r.u32()? as usize;
        let params = IndexParams {
            m: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
            level_lambda: r.f64()?,
            seed: r.u64()?,
        };
        let word_pos = r.u128()?;
        let count = r.u32()? as usize;
        let entry = r.u32()?;
        let mut idx = HnswIndex::new(dimension, params).map_err(|_| SnapshotError::Corrupt("invalid params"))?;
        idx.names.reserve(count);
        let mut name_ids = HashMap::with_capacity(count);
        for i in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| SnapshotError::Corrupt("name is not utf-8"))?;
            let level = r.u32()? as usize;
            let vector = (0..dimension).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            let mut layers = Vec::with_capacity(level + 1);
            for _ in 0..=level {
                let deg = r.u32()? as usize;
                let nbrs = (0..deg).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
                if nbrs.iter().any(|&n| n as usize >= count) {
                    return Err(SnapshotError::Corrupt("neighbour out of range"));
                }
                layers.push(nbrs);
            }
            if name_ids.insert(name.to_string(), i as u32).is_some() {
                return Err(SnapshotError::Corrupt("duplicate name"));
            }
            idx.names.push(name.to_string());
            idx.vectors.push(vector);
            idx.links.push(layers);
        }
        if !r.buf.is_empty() {
            return Err(SnapshotError::Corrupt("trailing bytes"));
        }
        idx.entry_point = match entry {
            u32::MAX if count == 0 => None,
            e if (e as usize) < count => Some(e),
            _ => return Err(SnapshotError::Corrupt("entry point out of range")),
        };
        idx.name_ids = name_ids;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_word_pos(word_pos);
        idx.rng = rng;
        Ok(idx)
    }

    /// Hex SHA-256 of the snapshot encoding.
    pub fn snapshot_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_snapshot_bytes()))
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<(), SnapshotError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_snapshot_bytes())?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<Self, SnapshotError> {
        Self::from_snapshot_bytes(&std::fs::read(path)?)
    }
}
