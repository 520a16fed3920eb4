//! Binary model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"TLCK" | u32 version
//! u32 len | model config as key=value text
//! u32 n   | n × (u32 len | branch label)          provenance
//! u32 n   | n × f64                               train log
//! u32 n   | n × (u32 len | name | u32 ndim | ndim × u64 | Π dims × f64)
//! ```
//!
//! Floats are stored as raw bits, so a write/read round-trip is exact.

use std::fs;
use std::path::Path;

use super::params::{ParamSet, Tensor};
use super::{ForecastModel, ModelConfig};
use crate::error::{Error, Result};
use crate::kv::KvFile;

const MAGIC: &[u8; 4] = b"TLCK";
const VERSION: u32 = 1;

pub fn encode(model: &ForecastModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.params.len() * 8);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_str(&mut out, &model.config.to_kv().render());
    put_u32(&mut out, model.provenance.len() as u32);
    for p in &model.provenance {
        put_str(&mut out, p);
    }
    put_u32(&mut out, model.train_log.len() as u32);
    for v in &model.train_log {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_u32(&mut out, model.params.tensors.len() as u32);
    for t in &model.params.tensors {
        put_str(&mut out, &t.name);
        put_u32(&mut out, t.shape.len() as u32);
        for d in &t.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ForecastModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Data("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let config = ModelConfig::from_kv(&KvFile::parse(&r.string()?)?, ModelConfig::default())?;
    let provenance = (0..r.u32()?).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let train_log = (0..r.u32()?).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let n_tensors = r.u32()?;
    let mut tensors = Vec::with_capacity(n_tensors as usize);
    for _ in 0..n_tensors {
        let name = r.string()?;
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Data("trailing bytes after checkpoint".into()));
    }
    let model = ForecastModel {
        params: ParamSet { tensors },
        config,
        train_log,
        provenance,
    };
    let expected = ForecastModel::init(&model.config)?;
    let shapes_match = expected.params.tensors.len() == model.params.tensors.len()
        && expected
            .params
            .tensors
            .iter()
            .zip(&model.params.tensors)
            .all(|(a, b)| a.name == b.name && a.shape == b.shape);
    if !shapes_match {
        return Err(Error::Data("checkpoint tensors do not match its config".into()));
    }
    Ok(model)
}

pub fn save(model: &ForecastModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(model)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<ForecastModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Data("truncated checkpoint".into()));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Data("invalid utf-8 in checkpoint".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = ForecastModel::init(&ModelConfig {
            seed: 17,
            conv_filters: 4,
            ..ModelConfig::default()
        })
        .unwrap();
        m.provenance = vec!["B2".into(), "B1".into()];
        m.train_log = vec![0.5, 0.1 + 0.2, f64::MIN_POSITIVE];
        let bytes = encode(&m);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode(&back), bytes);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save(&m, &p).unwrap();
        assert_eq!(load(&p).unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let m = ForecastModel::init(&ModelConfig::default()).unwrap();
        let bytes = encode(&m);
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
    }
}
