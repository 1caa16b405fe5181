//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "ORE-CKPT"
//! version    u32
//! config     u64 length + UTF-8 JSON echo of the run configuration
//! vocab      u64 vocabulary fingerprint
//! n_params   u64
//! per param: u64 name length + UTF-8 name
//!            u64 rank, u64 per dimension
//!            f64 per element, row-major
//! ```
//!
//! Writes are staged into one buffer so equal inputs produce byte-identical
//! files.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ORE-CKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// JSON echo of the configuration the parameters were trained under.
    pub config_json: String,
    /// Fingerprint of the vocabulary the model indexes into.
    pub vocab_hash: u64,
    pub params: Vec<ParamRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        write_bytes(&mut buf, self.config_json.as_bytes());
        buf.extend_from_slice(&self.vocab_hash.to_le_bytes());
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            let expect: usize = p.dims.iter().product();
            if expect != p.data.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has {} values but dims {:?}",
                    p.name,
                    p.data.len(),
                    p.dims
                )));
            }
            write_bytes(&mut buf, p.name.as_bytes());
            buf.extend_from_slice(&(p.dims.len() as u64).to_le_bytes());
            for &d in &p.dims {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &p.data {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a checkpoint".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let config_json = String::from_utf8(read_bytes(&mut r)?)
            .map_err(|e| Error::Checkpoint(format!("config echo is not UTF-8: {e}")))?;
        let vocab_hash = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let n_params = r.take_u64()? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = String::from_utf8(read_bytes(&mut r)?)
                .map_err(|e| Error::Checkpoint(format!("parameter name is not UTF-8: {e}")))?;
            let rank = r.take_u64()? as usize;
            if rank > 8 {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has implausible rank {rank}"
                )));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.take_u64()? as usize);
            }
            let numel: usize = dims.iter().product();
            if numel.checked_mul(8).map_or(true, |b| b > r.remaining()) {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} claims {numel} values past end of file"
                )));
            }
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            params.push(ParamRecord { name, dims, data });
        }
        if r.remaining() != 0 {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after last parameter",
                r.remaining()
            )));
        }
        Ok(Checkpoint {
            config_json,
            vocab_hash,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn write_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(bytes);
}

fn read_bytes(r: &mut Cursor) -> Result<Vec<u8>> {
    let len = r.take_u64()? as usize;
    Ok(r.take(len)?.to_vec())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
