//! Binary parameter files.
//!
//! ```text
//! magic      8 bytes  "WADRLCKP"
//! version    u32
//! iterations u64      optimizer steps taken
//! count      u32      number of entries
//! count × { name_len u32, name utf-8, trainable u8, rank u32, dims u32 × rank, step u64 }
//! count × { value f32 × len, m f32 × len, v f32 × len }
//! ```
//!
//! All integers and floats are little-endian. A JSON sidecar named `<file>.json` carries
//! free-form metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::params::Entry;
use super::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WADRLCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn encode_checkpoint<S: Scalar>(store: &ParamStore<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&store.iterations().to_le_bytes());
    out.extend_from_slice(&(store.entries.len() as u32).to_le_bytes());
    for e in &store.entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(u8::from(e.trainable));
        out.extend_from_slice(&(e.value.shape().len() as u32).to_le_bytes());
        for &d in e.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&e.step.to_le_bytes());
    }
    for e in &store.entries {
        for t in [&e.value, &e.m, &e.v] {
            for &x in t.data() {
                out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!("truncated file at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

pub fn decode_checkpoint<S: Scalar>(bytes: &[u8]) -> Result<ParamStore<S>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let iterations = r.u64()?;
    let count = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?;
        let trainable = r.take(1)?[0] != 0;
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let step = r.u64()?;
        manifest.push((name, trainable, dims, step));
    }
    let mut store = ParamStore::new();
    let mut steps = Vec::with_capacity(count);
    for (name, trainable, dims, step) in manifest {
        let n: usize = dims.iter().product();
        let read = |r: &mut Reader| -> Result<Tensor<S>> {
            Tensor::new(dims.clone(), r.f32s(n)?.into_iter().map(|x| S::of(x as f64)).collect())
        };
        let value = read(&mut r)?;
        let m = read(&mut r)?;
        let v = read(&mut r)?;
        let id = store.add(name, value, trainable)?;
        let e: &mut Entry<S> = &mut store.entries[id.0];
        e.m = m;
        e.v = v;
        steps.push(step);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    for (e, s) in store.entries.iter_mut().zip(steps) {
        e.step = s;
    }
    store.set_iterations(iterations);
    Ok(store)
}

/// Writes the parameter file and its JSON sidecar.
pub fn save_checkpoint<S: Scalar, M: Serialize>(store: &ParamStore<S>, metadata: &M, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(store)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(metadata)? + "\n";
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn load_checkpoint<S: Scalar, M: DeserializeOwned>(path: &Path) -> Result<(ParamStore<S>, M)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let store = decode_checkpoint(&bytes)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    Ok((store, serde_json::from_str(&text)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{AdamConfig, Gradients};

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        let w = s.add("enc.w", Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-7, -4.0]).unwrap(), true).unwrap();
        s.add("bn.mean", Tensor::row(vec![0.25, 0.5, 0.75]), false).unwrap();
        let mut g = Gradients::new(2);
        g.accumulate_with(w, &[2, 3], |t| t.fill(0.3));
        s.accumulate(&g);
        s.adam_step(&AdamConfig::default()).unwrap();
        s
    }

    #[test]
    fn binary_round_trip() {
        let s = store();
        let back: ParamStore<f32> = decode_checkpoint(&encode_checkpoint(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.iterations(), 1);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let bytes = encode_checkpoint(&store());
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f32>(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint::<f32>(&extra).is_err());
    }

    #[test]
    fn sidecar_is_written_next_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&store(), &serde_json::json!({"epoch": 3}), &path).unwrap();
        assert!(dir.path().join("model.ckpt.json").exists());
        let (s, meta): (ParamStore<f32>, serde_json::Value) = load_checkpoint(&path).unwrap();
        assert_eq!(s, store());
        assert_eq!(meta["epoch"], 3);
    }
}
