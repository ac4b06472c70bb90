//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "MOCAPCKP" | version u32 | sha256(arch) [32] | arch: u32 len + utf-8
//! params | buffers | extra        each: u32 count, then per tensor:
//!                                 u32 name len + utf-8, u32 ndim, u64 dims.., f64 data..
//! u8 has_optimizer [ lr, beta1, beta2, eps: f64 | step u64 | first moments | second moments ]
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{AdamState, NumericsError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MOCAPCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Architecture description plus every tensor needed to resume or run a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    /// JSON description of the architecture.
    pub arch: String,
    pub params: ParamStore,
    /// Auxiliary tensors such as normalization statistics.
    pub extra: BTreeMap<String, Tensor>,
    pub optimizer: Option<AdamState>,
}

impl ModelState {
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.arch.as_bytes()).into()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint());
        put_str(&mut out, &self.arch);
        put_map(&mut out, &self.params.params);
        put_map(&mut out, &self.params.buffers);
        put_map(&mut out, &self.extra);
        match &self.optimizer {
            None => out.push(0),
            Some(adam) => {
                out.push(1);
                for v in [adam.learning_rate, adam.beta1, adam.beta2, adam.epsilon] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&adam.step.to_le_bytes());
                put_map(&mut out, &adam.first_moment);
                put_map(&mut out, &adam.second_moment);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NumericsError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(NumericsError::Checkpoint("bad magic header".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(NumericsError::Checkpoint(format!("unsupported version {version}")));
        }
        let fingerprint: [u8; 32] = r.take(32)?.try_into().unwrap();
        let arch = r.string()?;
        let params = r.map()?;
        let buffers = r.map()?;
        let extra = r.map()?;
        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let learning_rate = r.f64()?;
                let beta1 = r.f64()?;
                let beta2 = r.f64()?;
                let epsilon = r.f64()?;
                let step = r.u64()?;
                let first_moment = r.map()?;
                let second_moment = r.map()?;
                Some(AdamState { learning_rate, beta1, beta2, epsilon, step, first_moment, second_moment })
            }
            b => return Err(NumericsError::Checkpoint(format!("bad optimizer flag {b}"))),
        };
        if r.pos != bytes.len() {
            return Err(NumericsError::Checkpoint("trailing bytes".into()));
        }
        let state = Self { arch, params: ParamStore { params, buffers }, extra, optimizer };
        if state.fingerprint() != fingerprint {
            return Err(NumericsError::Checkpoint("architecture fingerprint mismatch".into()));
        }
        Ok(state)
    }

    /// Writes to a temporary sibling file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), NumericsError> {
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NumericsError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_map(out: &mut Vec<u8>, map: &BTreeMap<String, Tensor>) {
    out.extend_from_slice(&(map.len() as u32).to_le_bytes());
    for (name, t) in map {
        put_str(out, name);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumericsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NumericsError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NumericsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NumericsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NumericsError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, NumericsError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| NumericsError::Checkpoint("name is not utf-8".into()))
    }

    fn map(&mut self) -> Result<BTreeMap<String, Tensor>, NumericsError> {
        let count = self.u32()?;
        let mut map = BTreeMap::new();
        for _ in 0..count {
            let name = self.string()?;
            let ndim = self.u32()? as usize;
            let shape = (0..ndim).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
            map.insert(name, Tensor::new(shape, data)?);
        }
        Ok(map)
    }
}
