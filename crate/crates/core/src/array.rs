//! Self-describing little-endian array files.
//!
//! ```text
//! "DFS1" | dtype u8 | ndim u8 | shape: ndim x u32 | payload
//! ```
//!
//! The payload is row-major and exactly `element_size * product(shape)`
//! bytes long; nothing may follow it.

use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"DFS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8 = 0,
    F32 = 1,
    F64 = 2,
    I64 = 3,
    Utf8 = 4,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<DType> {
        Some(match code {
            0 => DType::U8,
            1 => DType::F32,
            2 => DType::F64,
            3 => DType::I64,
            4 => DType::Utf8,
            _ => return None,
        })
    }

    pub fn size(self) -> usize {
        match self {
            DType::U8 | DType::Utf8 => 1,
            DType::F32 => 4,
            DType::F64 | DType::I64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArrayError {
    #[error("bad magic")]
    BadMagic,
    #[error("unknown dtype code {0}")]
    UnknownDType(u8),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("payload is {actual} bytes, shape requires {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("expected dtype {expected:?}, found {actual:?}")]
    WrongDType { expected: DType, actual: DType },
    #[error("payload is not valid UTF-8")]
    InvalidUtf8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayFile {
    pub dtype: DType,
    pub shape: Vec<u32>,
    pub payload: Vec<u8>,
}

/// Byte count implied by a dtype and shape, or `None` on overflow.
pub fn payload_len(dtype: DType, shape: &[u32]) -> Option<usize> {
    shape
        .iter()
        .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d as usize))
}

impl ArrayFile {
    /// Panics if the payload does not match the shape.
    pub fn new(dtype: DType, shape: Vec<u32>, payload: Vec<u8>) -> Self {
        assert_eq!(
            payload_len(dtype, &shape),
            Some(payload.len()),
            "payload/shape mismatch"
        );
        Self {
            dtype,
            shape,
            payload,
        }
    }

    pub fn from_u8(shape: Vec<u32>, data: Vec<u8>) -> Self {
        Self::new(DType::U8, shape, data)
    }

    pub fn from_f32(shape: Vec<u32>, data: &[f32]) -> Self {
        Self::new(
            DType::F32,
            shape,
            data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        )
    }

    pub fn from_f64(shape: Vec<u32>, data: &[f64]) -> Self {
        Self::new(
            DType::F64,
            shape,
            data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        )
    }

    pub fn from_i64(shape: Vec<u32>, data: &[i64]) -> Self {
        Self::new(
            DType::I64,
            shape,
            data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        )
    }

    pub fn scalar_f32(v: f32) -> Self {
        Self::from_f32(Vec::new(), &[v])
    }

    pub fn scalar_f64(v: f64) -> Self {
        Self::from_f64(Vec::new(), &[v])
    }

    pub fn from_text(text: &str) -> Self {
        Self::new(
            DType::Utf8,
            vec![text.len() as u32],
            text.as_bytes().to_vec(),
        )
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().map(|&d| d as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn header_len(&self) -> usize {
        4 + 2 + 4 * self.shape.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(self.dtype.code());
        out.push(self.shape.len() as u8);
        for d in &self.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ArrayError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(ArrayError::BadMagic);
        }
        if bytes.len() < 6 {
            return Err(ArrayError::TruncatedHeader);
        }
        let dtype = DType::from_code(bytes[4]).ok_or(ArrayError::UnknownDType(bytes[4]))?;
        let ndim = bytes[5] as usize;
        let body = &bytes[6..];
        if body.len() < 4 * ndim {
            return Err(ArrayError::TruncatedHeader);
        }
        let shape: Vec<u32> = body[..4 * ndim]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let payload = &body[4 * ndim..];
        let expected = payload_len(dtype, &shape).unwrap_or(usize::MAX);
        if payload.len() != expected {
            return Err(ArrayError::PayloadLength {
                expected,
                actual: payload.len(),
            });
        }
        Ok(Self {
            dtype,
            shape,
            payload: payload.to_vec(),
        })
    }

    fn expect(&self, dtype: DType) -> Result<(), ArrayError> {
        if self.dtype == dtype {
            Ok(())
        } else {
            Err(ArrayError::WrongDType {
                expected: dtype,
                actual: self.dtype,
            })
        }
    }

    pub fn to_f32(&self) -> Result<Vec<f32>, ArrayError> {
        self.expect(DType::F32)?;
        Ok(self
            .payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn to_f64(&self) -> Result<Vec<f64>, ArrayError> {
        self.expect(DType::F64)?;
        Ok(self
            .payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn to_i64(&self) -> Result<Vec<i64>, ArrayError> {
        self.expect(DType::I64)?;
        Ok(self
            .payload
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn to_text(&self) -> Result<&str, ArrayError> {
        self.expect(DType::Utf8)?;
        std::str::from_utf8(&self.payload).map_err(|_| ArrayError::InvalidUtf8)
    }
}
