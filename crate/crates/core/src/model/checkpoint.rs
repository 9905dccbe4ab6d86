//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "INTGSCN\0"
//! version   u32      1
//! config    u32 length + UTF-8 JSON of ModelConfig
//! adam step u64
//! count     u32
//! per tensor:
//!   name    u32 length + UTF-8
//!   dtype   u8       1 = f64
//!   ndim    u32
//!   dims    ndim × u64
//!   data    numel × f64
//! ```
//!
//! Model parameters use their own names; Adam moments are stored as
//! `adam.m/<name>` and `adam.v/<name>`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::network::Model;
use crate::model::train::Adam;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"INTGSCN\0";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;
const M_PREFIX: &str = "adam.m/";
const V_PREFIX: &str = "adam.v/";

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    put_u32(w, u32::try_from(s.len()).map_err(|_| Error::Checkpoint("string too long".into()))?)?;
    Ok(w.write_all(s.as_bytes())?)
}

fn put_tensor(w: &mut impl Write, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
    put_str(w, name)?;
    w.write_all(&[DTYPE_F64])?;
    put_u32(w, shape.len() as u32)?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Writes the model and, if given, the optimizer state.
pub fn save(path: &Path, model: &Model, opt: Option<&Adam>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    let cfg = serde_json::to_string(model.config()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    put_str(&mut w, &cfg)?;
    w.write_all(&opt.map_or(0, |o| o.step).to_le_bytes())?;
    let params = model.params();
    let moments = opt.map_or(0, |o| o.m.len() + o.v.len());
    put_u32(&mut w, (params.len() + moments) as u32)?;
    for (name, t) in params {
        put_tensor(&mut w, name, t.shape(), t.data())?;
    }
    if let Some(o) = opt {
        for (prefix, map) in [(M_PREFIX, &o.m), (V_PREFIX, &o.v)] {
            for (name, data) in map {
                let shape = params.get(name).map_or_else(|| vec![data.len()], |t| t.shape().to_vec());
                put_tensor(&mut w, &format!("{prefix}{name}"), &shape, data)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
        String::from_utf8(buf).map_err(|_| Error::Checkpoint("invalid UTF-8 in checkpoint".into()))
    }
}

/// Loaded model and optimizer state (`None` when no moments were stored).
pub fn load(path: &Path) -> Result<(Model, Option<Adam>)> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not an integscan checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let config: ModelConfig = serde_json::from_str(&r.string()?).map_err(|e| Error::Checkpoint(format!("bad config: {e}")))?;
    let step = r.u64()?;
    let count = r.u32()?;
    let mut params = BTreeMap::new();
    let mut adam = Adam {
        step,
        ..Adam::default()
    };
    for _ in 0..count {
        let name = r.string()?;
        let [dtype] = r.bytes::<1>()?;
        if dtype != DTYPE_F64 {
            return Err(Error::Checkpoint(format!("tensor `{name}` has unsupported dtype {dtype}")));
        }
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.u64().map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
        if let Some(p) = name.strip_prefix(M_PREFIX) {
            adam.m.insert(p.to_owned(), data);
        } else if let Some(p) = name.strip_prefix(V_PREFIX) {
            adam.v.insert(p.to_owned(), data);
        } else {
            let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
            params.insert(name, t);
        }
    }
    let mut extra = [0u8; 1];
    if r.inner.read(&mut extra)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    let model = Model::from_params(config, params)?;
    let opt = (adam.step > 0 || !adam.m.is_empty()).then_some(adam);
    Ok((model, opt))
}
