//! The `SSLT` raw-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"SSLT"        4 bytes
//! dtype  u8             1 = u8, 2 = i64, 3 = f32, 4 = f64
//! rank   u8
//! dims   u64 x rank
//! data   row-major payload, prod(dims) elements
//! ```
//!
//! Several tensors may be concatenated in one file; dataset files hold the
//! sample tensor followed by a rank-1 label tensor.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SSLT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    U8 = 1,
    I64 = 2,
    F32 = 3,
    F64 = 4,
}

impl DType {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::U8),
            2 => Some(DType::I64),
            3 => Some(DType::F32),
            4 => Some(DType::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::F32 => 4,
            DType::I64 | DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    I64(Vec<i64>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::U8(_) => DType::U8,
            TensorData::I64(_) => DType::I64,
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::I64(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl RawTensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::arg(format!(
                "tensor shape {:?} holds {} elements but payload has {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(RawTensor { shape, data })
    }

    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, TensorData::F64(data))
    }

    /// Payload widened to `f64` with no rescaling.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::U8(v) => v.iter().map(|&b| b as f64).collect(),
            TensorData::I64(v) => v.iter().map(|&b| b as f64).collect(),
            TensorData::F32(v) => v.iter().map(|&b| b as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<()> {
        if self.shape.len() > u8::MAX as usize {
            return Err(Error::arg("tensor rank exceeds 255"));
        }
        out.extend_from_slice(MAGIC);
        out.push(self.data.dtype() as u8);
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.encode_into(&mut out)?;
        Ok(out)
    }
}

/// Sequential reader over a byte buffer holding one or more tensors.
pub struct TensorReader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> TensorReader<'a> {
    pub fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        TensorReader {
            bytes,
            offset: 0,
            path,
        }
    }

    pub fn at_end(&self) -> bool {
        self.offset == self.bytes.len()
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(s)
            }
            None => Err(Error::Format {
                path: self.path.to_path_buf(),
                offset: self.bytes.len() as u64,
                msg: format!(
                    "truncated {what}: needed {n} bytes at offset {}, file has {}",
                    self.offset,
                    self.bytes.len()
                ),
            }),
        }
    }

    pub fn read_tensor(&mut self) -> Result<RawTensor> {
        let start = self.offset;
        let magic = self.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::UnsupportedFormat {
                path: self.path.to_path_buf(),
                msg: format!("bad magic {:?} at offset {start}, expected \"SSLT\"", magic),
            });
        }
        let code = self.take(1, "dtype")?[0];
        let dtype = DType::from_code(code).ok_or_else(|| Error::UnsupportedFormat {
            path: self.path.to_path_buf(),
            msg: format!("unknown dtype code {code} at offset {}", start + 4),
        })?;
        let rank = self.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let b = self.take(8, "dims")?;
            shape.push(u64::from_le_bytes(b.try_into().unwrap()) as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format {
                path: self.path.to_path_buf(),
                offset: self.offset as u64,
                msg: format!("dims {shape:?} overflow"),
            })?;
        let payload = self.take(count * dtype.width(), "payload")?;
        let data = match dtype {
            DType::U8 => TensorData::U8(payload.to_vec()),
            DType::I64 => TensorData::I64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(RawTensor { shape, data })
    }
}

pub fn write_tensors(path: &Path, tensors: &[&RawTensor]) -> Result<()> {
    let mut buf = Vec::new();
    for t in tensors {
        t.encode_into(&mut buf)?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<RawTensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = TensorReader::new(&bytes, path);
    let mut out = Vec::new();
    while !reader.at_end() {
        out.push(reader.read_tensor()?);
    }
    Ok(out)
}
