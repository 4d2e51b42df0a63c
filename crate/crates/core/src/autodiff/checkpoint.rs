//! Versioned binary checkpoints.
//!
//! ```text
//! "SBFD" | version: u32 | count: u32 |
//!   count x ( name_len: u32 | name: utf-8 | rank: u32 | dims: u64 x rank | values: f32 x prod(dims) )
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::param::Param;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"SBFD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl NamedTensor {
    pub fn from_param<T: Scalar>(p: &Param<T>) -> Self {
        NamedTensor {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            values: p.value.data().iter().map(|v| v.as_f64() as f32).collect(),
        }
    }

    pub fn vector(name: &str, values: &[f64]) -> Self {
        NamedTensor {
            name: name.to_string(),
            shape: vec![values.len()],
            values: values.iter().map(|&v| v as f32).collect(),
        }
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, tensors: &[NamedTensor]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &t.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::BadCheckpoint(format!("truncated: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<NamedTensor>> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(Error::BadCheckpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::BadCheckpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::BadCheckpoint("name is not UTF-8".into()))?;
        let rank = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(read_array(&mut r)?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f32::from_le_bytes(read_array(&mut r)?));
        }
        out.push(NamedTensor { name, shape, values });
    }
    Ok(out)
}

pub fn save(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(file), tensors).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<NamedTensor>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}

pub fn find<'a>(tensors: &'a [NamedTensor], name: &str) -> Result<&'a NamedTensor> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::BadCheckpoint(format!("missing tensor `{name}`")))
}

/// Copies checkpoint values into parameters, matching by name and shape.
pub fn load_params<T: Scalar>(tensors: &[NamedTensor], params: Vec<&mut Param<T>>) -> Result<()> {
    for p in params {
        let t = find(tensors, &p.name)?;
        if t.shape != p.value.shape() {
            return Err(Error::shape("checkpoint", &t.shape, p.value.shape()));
        }
        for (dst, &v) in p.value.data_mut().iter_mut().zip(&t.values) {
            *dst = T::of(v as f64);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let t = NamedTensor {
            name: "ab".into(),
            shape: vec![1, 2],
            values: vec![1.0, -2.0],
        };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[t.clone()]).unwrap();
        let mut expected = b"SBFD".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(b"ab");
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.extend(2u64.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-2.0f32).to_le_bytes());
        assert_eq!(buf, expected);
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), vec![t]);
    }

    #[test]
    fn rejects_unknown_version_and_garbage() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[]).unwrap();
        buf[4] = 7;
        assert!(matches!(
            read_checkpoint(&buf[..]),
            Err(Error::CheckpointVersionMismatch { found: 7, expected: 1 })
        ));
        assert!(matches!(read_checkpoint(&b"NOPE"[..]), Err(Error::BadCheckpoint(_))));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[NamedTensor::vector("x", &[1.0, 2.0])]).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(matches!(read_checkpoint(&buf[..]), Err(Error::BadCheckpoint(_))));
    }
}
