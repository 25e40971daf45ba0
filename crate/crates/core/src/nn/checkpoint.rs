//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "SSCKPT\0\0"
//! version u32      currently 1
//! count   u32
//! count x { name_len u32, name utf-8, ndim u32, dims u64 * ndim, data f64 * prod(dims) }
//! ```

use std::fs;
use std::path::Path;

use ndarray::ArrayD;

use super::params::{dyn_shape, ParamSet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SSCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.scalar_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, value) in params.entries() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(value.ndim() as u32).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in value.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, ArrayD<f64>)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("parameter name is not utf-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let value = ArrayD::from_shape_vec(dyn_shape(&shape), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        entries.push((name, value));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(entries)
}

pub fn save(path: &Path, params: &ParamSet) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

/// Loads values into an existing parameter set; every name must be present with the same shape.
pub fn load_into(path: &Path, params: &mut ParamSet) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let entries = decode(&bytes)?;
    if entries.len() != params.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, model expects {}",
            entries.len(),
            params.len()
        )));
    }
    for (name, value) in entries {
        params.set_value(&name, value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(vals in proptest::collection::vec(-1e6f64..1e6, 1..40), rows in 1usize..5) {
            let mut ps = ParamSet::new();
            let n = vals.len();
            ps.register("flat", ArrayD::from_shape_vec(dyn_shape(&[n]), vals.clone()).unwrap()).unwrap();
            let m: Vec<f64> = (0..rows * 3).map(|i| i as f64 * 0.5 - 1.0).collect();
            ps.register("layer0.w", ArrayD::from_shape_vec(dyn_shape(&[rows, 3]), m).unwrap()).unwrap();
            let decoded = decode(&encode(&ps)).unwrap();
            prop_assert_eq!(decoded.len(), 2);
            for ((name, value), (n2, v2)) in decoded.iter().zip(ps.entries()) {
                prop_assert_eq!(name.as_str(), n2);
                prop_assert_eq!(value, v2);
            }
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut ps = ParamSet::new();
        ps.register("w", ArrayD::ones(dyn_shape(&[2, 2]))).unwrap();
        let bytes = encode(&ps);
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut wrong_version = bytes;
        wrong_version[8] = 9;
        assert!(decode(&wrong_version).is_err());
    }

    #[test]
    fn load_checks_names_and_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        let mut src = ParamSet::new();
        src.register("w", ArrayD::from_elem(dyn_shape(&[2]), 3.0)).unwrap();
        save(&path, &src).unwrap();

        let mut dst = ParamSet::new();
        dst.register("w", ArrayD::zeros(dyn_shape(&[2]))).unwrap();
        load_into(&path, &mut dst).unwrap();
        assert_eq!(dst, src);

        let mut other = ParamSet::new();
        other.register("w", ArrayD::zeros(dyn_shape(&[3]))).unwrap();
        assert!(load_into(&path, &mut other).is_err());
    }
}
