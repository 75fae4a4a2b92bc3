//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "TFDSEDCK"
//! version  u32      1
//! config   u64 length + UTF-8 run config text
//! count    u32      number of tensors
//! per tensor:
//!   name     u32 length + UTF-8
//!   kind     u8       1 = trainable, 0 = buffer
//!   rank     u32
//!   dims     rank × u64
//!   data     numel × f64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sed_tensor::{ParamStore, Tensor};

use crate::config::RunConfig;
use crate::error::{Result, SedError};
use crate::model::SedNet;

const MAGIC: &[u8; 8] = b"TFDSEDCK";
const VERSION: u32 = 1;

fn ck(detail: impl Into<String>) -> SedError {
    SedError::Checkpoint(detail.into())
}

pub fn encode(cfg: &RunConfig, store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let text = cfg.serialize();
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.trainable as u8);
        out.extend_from_slice(&(p.value.ndim() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| ck("truncated file"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| ck("invalid UTF-8"))
    }
}

/// A decoded tensor entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub trainable: bool,
    pub value: Tensor,
}

pub fn decode(bytes: &[u8]) -> Result<(RunConfig, Vec<Entry>)> {
    let mut c = Cursor { buf: bytes, at: 0 };
    if c.take(8)? != MAGIC {
        return Err(ck("not a checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(ck(format!("unsupported version {}", version)));
    }
    let len = c.u64()? as usize;
    let cfg = RunConfig::parse(&c.string(len)?)?;
    let n = c.u32()? as usize;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let len = c.u32()? as usize;
        let name = c.string(len)?;
        let trainable = match c.u8()? {
            0 => false,
            1 => true,
            k => return Err(ck(format!("`{}`: bad kind {}", name, k))),
        };
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = c.take(numel.checked_mul(8).ok_or_else(|| ck("tensor too large"))?)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        entries.push(Entry {
            name,
            trainable,
            value: Tensor::new(shape, data)?,
        });
    }
    if c.at != bytes.len() {
        return Err(ck("trailing bytes"));
    }
    Ok((cfg, entries))
}

pub fn save(path: &Path, cfg: &RunConfig, store: &ParamStore) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| SedError::io(path, e))?;
    f.write_all(&encode(cfg, store)).map_err(|e| SedError::io(path, e))
}

/// Rebuilds the network from the stored config and fills its parameters.
pub fn load(path: &Path) -> Result<(RunConfig, SedNet, ParamStore)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| SedError::io(path, e))?;
    let (cfg, entries) = decode(&bytes)?;
    let (net, mut store) = SedNet::build(&cfg.model, cfg.seed)?;
    if entries.len() != store.len() {
        return Err(ck(format!("{} tensors stored, model has {}", entries.len(), store.len())));
    }
    for e in entries {
        let id = store.id(&e.name).ok_or_else(|| ck(format!("unknown tensor `{}`", e.name)))?;
        if store.get(id).trainable != e.trainable {
            return Err(ck(format!("`{}`: trainable flag mismatch", e.name)));
        }
        store.set(id, e.value).map_err(|err| ck(err.to_string()))?;
    }
    Ok((cfg, net, store))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{LayerConfig, ModelConfig};

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        let mut m = ModelConfig::with_layers(vec![LayerConfig::static_layer(2, (1, 128))]);
        m.gru_hidden = 2;
        m.gru_layers = 1;
        cfg.model = m;
        cfg
    }

    #[test]
    fn roundtrip_through_file() {
        let cfg = small_cfg();
        let (_, mut store) = SedNet::build(&cfg.model, 4).unwrap();
        let id = store.id("conv1.bn.running_var").unwrap();
        store.tensor_mut(id).data_mut()[0] = 0.123;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &cfg, &store).unwrap();
        let (cfg2, _, store2) = load(&path).unwrap();
        assert_eq!(cfg2, cfg);
        for ((_, a), (_, b)) in store.iter().zip(store2.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let cfg = small_cfg();
        let (_, store) = SedNet::build(&cfg.model, 0).unwrap();
        let bytes = encode(&cfg, &store);
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode(b"NOTACKPT").is_err());
    }
}
