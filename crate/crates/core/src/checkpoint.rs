//! Binary model snapshots.
//!
//! Layout (little-endian): magic `AMPG`, version `u32`, entry count `u32`,
//! then per entry: name length `u32`, UTF-8 name, rank `u32`, dims `u32` each,
//! and the `f32` values. Entries are the parameters in model order followed
//! by the running mean and variance of every batch-norm layer.

use std::path::Path;

use crate::error::{bail, Error, Result};
use crate::nn::Model;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AMPG";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

pub fn entries(model: &Model<f32>) -> Vec<Entry> {
    let mut out: Vec<Entry> = model
        .param_names()
        .iter()
        .zip(model.params())
        .map(|(name, p)| Entry {
            name: name.clone(),
            shape: p.shape().to_vec(),
            values: p.data().to_vec(),
        })
        .collect();
    for (name, s) in model.bn_names().iter().zip(model.bn_stats()) {
        for (suffix, values) in [("running_mean", &s.mean), ("running_var", &s.var)] {
            out.push(Entry {
                name: format!("{}.{}", name, suffix),
                shape: vec![values.len()],
                values: values.clone(),
            });
        }
    }
    out
}

pub fn to_bytes(model: &Model<f32>) -> Vec<u8> {
    let entries = entries(model);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in &entries {
        buf.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(e.name.as_bytes());
        buf.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &e.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            bail!(Parse, "checkpoint truncated at offset {}", self.pos);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn parse(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        bail!(Parse, "not a checkpoint (bad magic)");
    }
    let version = c.u32()?;
    if version != VERSION {
        bail!(Parse, "unsupported checkpoint version {}", version);
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Parse("entry name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32()? as usize;
        let shape = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let values = c
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push(Entry {
            name,
            shape,
            values,
        });
    }
    if c.pos != bytes.len() {
        bail!(Parse, "{} trailing bytes after checkpoint", bytes.len() - c.pos);
    }
    Ok(out)
}

/// Overwrites parameters and running statistics; names and shapes must match.
pub fn from_bytes(model: &mut Model<f32>, bytes: &[u8]) -> Result<()> {
    let loaded = parse(bytes)?;
    let expected = entries(model);
    if loaded.len() != expected.len() {
        bail!(
            Parse,
            "checkpoint has {} entries, model needs {}",
            loaded.len(),
            expected.len()
        );
    }
    for (l, e) in loaded.iter().zip(&expected) {
        if l.name != e.name || l.shape != e.shape {
            bail!(
                Shape,
                "checkpoint entry {} {:?} does not match model entry {} {:?}",
                l.name,
                l.shape,
                e.name,
                e.shape
            );
        }
    }
    let n_params = model.params().len();
    for (p, l) in model.params_mut().iter_mut().zip(&loaded) {
        *p = Tensor::from_vec(&l.shape, l.values.clone())?;
    }
    for (i, s) in model.bn_stats_mut().iter_mut().enumerate() {
        s.mean = loaded[n_params + 2 * i].values.clone();
        s.var = loaded[n_params + 2 * i + 1].values.clone();
    }
    Ok(())
}

pub fn save(model: &Model<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(model: &mut Model<f32>, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(model, &bytes)
}
