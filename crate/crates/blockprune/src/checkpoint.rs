//! Binary checkpoint container.
//!
//! Little-endian throughout: magic `BFCK`, `u32` version, the model config
//! (every field as `u32` except the cutoff, an `f64`), a `u32` tensor count,
//! then per tensor its `u32`-length-prefixed UTF-8 name, `u32` rank, `u64`
//! dims, a dtype tag (`0` = f32) and the raw payload.
//!
//! Parameters are stored as f32, so saving rounds them; a load/save cycle
//! is byte-exact.

use std::path::Path;

use blockprune_core::model::{Checkpoint, ModelConfig};
use blockprune_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BFCK";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let c = ckpt.config();
    let mut out = Vec::with_capacity(64 + 4 * ckpt.param_count());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.blocks, c.mlp_layers, c.node_dim, c.edge_dim, c.n_rbf] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.cutoff.to_le_bytes());
    out.extend_from_slice(&c.species_count.to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(ckpt.params().len() as u32).to_le_bytes());
    for (name, t) in ckpt.params() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.push(DTYPE_F32);
        for &x in t.data() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        self.array(what).map(u32::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes };
    let magic = r.array::<4>("magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let config = ModelConfig {
        blocks: r.u32("config")?,
        mlp_layers: r.u32("config")?,
        node_dim: r.u32("config")?,
        edge_dim: r.u32("config")?,
        n_rbf: r.u32("config")?,
        cutoff: f64::from_le_bytes(r.array("config")?),
        species_count: r.u32("config")?,
        seed: r.u32("config")?,
    };
    let count = r.u32("tensor count")? as usize;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32("tensor name")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::BadName)?
            .to_owned();
        let ndim = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            let d = u64::from_le_bytes(r.array("tensor dims")?);
            shape.push(usize::try_from(d).map_err(|_| Error::Truncated("tensor dims"))?);
        }
        let dtype = r.array::<1>("dtype")?[0];
        if dtype != DTYPE_F32 {
            return Err(Error::UnsupportedDtype(dtype));
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or(Error::Truncated("tensor payload"))?;
        let payload = r.take(numel, "tensor payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
            .collect();
        params.push((name, Tensor::new(shape, data)?));
    }
    if !r.buf.is_empty() {
        return Err(Error::TrailingBytes(r.buf.len()));
    }
    Ok(Checkpoint::from_parts(config, params)?)
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// The checkpoint as it will be after a save/load cycle.
pub fn rounded(ckpt: &Checkpoint) -> Checkpoint {
    decode(&encode(ckpt)).expect("freshly encoded checkpoint decodes")
}
