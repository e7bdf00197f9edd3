//! `TARC1` tensor archive.
//!
//! ```text
//! "TARC1"                      5 bytes
//! entry count                  u32
//! per entry:
//!   name length                u16
//!   name                       UTF-8 bytes
//!   dtype                      u8   (0 = f32, 1 = f64)
//!   rank                       u8
//!   dims                       rank x u32
//!   payload                    product(dims) little-endian values
//! ```
//!
//! All integers are little-endian. Entries keep their insertion order.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

pub const TARC_MAGIC: &[u8; 5] = b"TARC1";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("bad magic, expected TARC1")]
    Magic,
    #[error("archive truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after the last entry")]
    Trailing(usize),
    #[error("unknown dtype tag {0}")]
    Dtype(u8),
    #[error("tensor name is not UTF-8")]
    Utf8,
    #[error("duplicate tensor name `{0}`")]
    Duplicate(String),
    #[error("tensor `{0}`: name longer than 65535 bytes")]
    NameTooLong(String),
    #[error("tensor `{0}`: rank above 255")]
    RankTooLarge(String),
    #[error("tensor `{name}`: shape {shape:?} holds {expected} values, payload has {got}")]
    Payload {
        name: String,
        shape: Vec<u32>,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, ArchiveError> {
        match tag {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            t => Err(ArchiveError::Dtype(t)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<u32>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(shape: Vec<u32>, data: Vec<f32>) -> Self {
        Self {
            shape,
            data: TensorData::F32(data),
        }
    }

    pub fn f64(shape: Vec<u32>, data: Vec<f64>) -> Self {
        Self {
            shape,
            data: TensorData::F64(data),
        }
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().map(|&d| d as usize).product()
    }

    fn check(&self, name: &str) -> Result<(), ArchiveError> {
        if self.shape.len() > 255 {
            return Err(ArchiveError::RankTooLarge(name.to_string()));
        }
        if self.numel() != self.data.len() {
            return Err(ArchiveError::Payload {
                name: name.to_string(),
                shape: self.shape.clone(),
                expected: self.numel(),
                got: self.data.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorArchive {
    entries: IndexMap<String, Tensor>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor; names must be unique and payloads must match shapes.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), ArchiveError> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(ArchiveError::NameTooLong(name));
        }
        tensor.check(&name)?;
        if self.entries.contains_key(&name) {
            return Err(ArchiveError::Duplicate(name));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(TARC_MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dtype().tag());
            out.push(t.shape.len() as u8);
            for d in &t.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            match &t.data {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArchiveError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(5)? != TARC_MAGIC {
            return Err(ArchiveError::Magic);
        }
        let count = cur.u32()?;
        let mut archive = TensorArchive::new();
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| ArchiveError::Utf8)?
                .to_string();
            let dtype = Dtype::from_tag(cur.u8()?)?;
            let rank = cur.u8()? as usize;
            let shape = (0..rank).map(|_| cur.u32()).collect::<Result<Vec<_>, _>>()?;
            let numel: usize = shape.iter().map(|&d| d as usize).product();
            let raw = cur.take(numel.checked_mul(dtype.size()).ok_or(ArchiveError::Truncated(cur.pos))?)?;
            let data = match dtype {
                Dtype::F32 => TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                ),
                Dtype::F64 => TensorData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ),
            };
            archive.insert(name, Tensor { shape, data })?;
        }
        if cur.pos != bytes.len() {
            return Err(ArchiveError::Trailing(bytes.len() - cur.pos));
        }
        Ok(archive)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), ArchiveError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, ArchiveError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn load(path: &Path) -> Result<Self, ArchiveError> {
        let bytes = std::fs::read(path).map_err(|source| ArchiveError::File {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArchiveError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| ArchiveError::File {
            path: path.display().to_string(),
            source,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ArchiveError::Truncated(self.pos)),
        }
    }

    fn u8(&mut self) -> Result<u8, ArchiveError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ArchiveError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout() {
        let mut a = TensorArchive::new();
        a.insert("w", Tensor::f32(vec![2], vec![1.0, -2.0])).unwrap();
        let b = a.to_bytes();
        let mut expected = b"TARC1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.push(b'w');
        expected.push(0);
        expected.push(1);
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(b, expected);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(TensorArchive::from_bytes(b"TARC2\0\0\0\0"), Err(ArchiveError::Magic)));
        let mut a = TensorArchive::new();
        a.insert("x", Tensor::f64(vec![1, 2], vec![1.0, 2.0])).unwrap();
        let b = a.to_bytes();
        assert!(matches!(TensorArchive::from_bytes(&b[..b.len() - 1]), Err(ArchiveError::Truncated(_))));
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(TensorArchive::from_bytes(&extra), Err(ArchiveError::Trailing(1))));
        let mut bad_tag = b.clone();
        bad_tag[5 + 4 + 2 + 1] = 7;
        assert!(matches!(TensorArchive::from_bytes(&bad_tag), Err(ArchiveError::Dtype(7))));
    }

    #[test]
    fn insert_checks() {
        let mut a = TensorArchive::new();
        assert!(matches!(
            a.insert("x", Tensor::f32(vec![3], vec![1.0])),
            Err(ArchiveError::Payload { .. })
        ));
        a.insert("x", Tensor::f32(vec![], vec![1.0])).unwrap();
        assert!(matches!(a.insert("x", Tensor::f32(vec![], vec![1.0])), Err(ArchiveError::Duplicate(_))));
    }

    proptest! {
        #[test]
        fn bytes_round_trip(
            tensors in proptest::collection::vec(
                (0u32..4, 0u32..4, any::<bool>(), proptest::collection::vec(-1e6f64..1e6, 16)),
                0..6,
            )
        ) {
            let mut a = TensorArchive::new();
            for (i, (r, c, wide, vals)) in tensors.into_iter().enumerate() {
                let n = (r * c) as usize;
                let t = if wide {
                    Tensor::f64(vec![r, c], vals[..n].to_vec())
                } else {
                    Tensor::f32(vec![r, c], vals[..n].iter().map(|&v| v as f32).collect())
                };
                a.insert(format!("t{i}"), t).unwrap();
            }
            prop_assert_eq!(TensorArchive::from_bytes(&a.to_bytes()).unwrap(), a);
        }
    }
}
