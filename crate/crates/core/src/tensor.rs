//! Activation tensors and the `QLT1` dump format.
//!
//! Layout: 4-byte magic `QLT1`, one dtype byte (0 = f32, 1 = f64), rows and
//! cols as little-endian u64, then the row-major little-endian payload.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QLT1";
pub const HEADER_LEN: usize = 4 + 1 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// Immutable row-major matrix of finite values (rows = samples, cols = channels).
///
/// Values are held as f64 regardless of storage precision. `dtype` records
/// the precision the tensor is saved with; an `F32` tensor only ever holds
/// values exactly representable in f32, so saving it loses nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    rows: usize,
    cols: usize,
    dtype: Dtype,
    data: Vec<f64>,
}

fn check_shape(rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyTensor { rows, cols });
    }
    let expected = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::MalformedHeader(format!("shape {rows}x{cols} overflows")))?;
    if expected != len {
        return Err(Error::ShapeMismatch { expected, actual: len });
    }
    Ok(())
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteValue { index }),
        None => Ok(()),
    }
}

impl ActivationTensor {
    pub fn from_f64(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols, data.len())?;
        check_finite(&data)?;
        Ok(Self { rows, cols, dtype: Dtype::F64, data })
    }

    pub fn from_f32(rows: usize, cols: usize, data: &[f32]) -> Result<Self> {
        check_shape(rows, cols, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        let data = data.iter().map(|&v| v as f64).collect();
        Ok(Self { rows, cols, dtype: Dtype::F32, data })
    }

    /// Builds a tensor by evaluating `f(row, col)` for every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.saturating_mul(cols));
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::from_f64(rows, cols, data)
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { rows, cols, dtype: Dtype::F64, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Explicit narrowing to f32 storage. Fails if a value overflows f32.
    pub fn to_f32(&self) -> Result<Self> {
        let narrowed: Vec<f32> = self.data.iter().map(|&v| v as f32).collect();
        Self::from_f32(self.rows, self.cols, &narrowed)
    }

    /// Same values tagged for f64 storage.
    pub fn to_f64(&self) -> Self {
        Self { dtype: Dtype::F64, ..self.clone() }
    }

    /// Copy of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows {
            return Err(Error::Precondition(format!(
                "row range {start}..{end} invalid for {} rows",
                self.rows
            )));
        }
        Ok(Self {
            rows: end - start,
            cols: self.cols,
            dtype: self.dtype,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        })
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_f64(self.rows, self.cols, self.data.iter().map(|v| v * c).collect())
    }
}

/// Encodes a tensor in the dump format.
pub fn encode(t: &ActivationTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + t.len() * t.dtype.width());
    out.extend_from_slice(MAGIC);
    out.push(t.dtype.tag());
    out.extend_from_slice(&(t.rows as u64).to_le_bytes());
    out.extend_from_slice(&(t.cols as u64).to_le_bytes());
    match t.dtype {
        Dtype::F32 => {
            for &v in &t.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Decodes a dump, preserving its stored precision.
pub fn decode(bytes: &[u8]) -> Result<ActivationTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::MalformedHeader("bad magic".into()));
    }
    let dtype = Dtype::from_tag(bytes[4])
        .ok_or_else(|| Error::MalformedHeader(format!("unknown dtype tag {}", bytes[4])))?;
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let rows = usize::try_from(read_u64(5))
        .map_err(|_| Error::MalformedHeader("row count does not fit in usize".into()))?;
    let cols = usize::try_from(read_u64(13))
        .map_err(|_| Error::MalformedHeader("column count does not fit in usize".into()))?;
    if rows == 0 || cols == 0 {
        return Err(Error::MalformedHeader(format!("empty shape {rows}x{cols}")));
    }
    let expected = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::MalformedHeader(format!("shape {rows}x{cols} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    let width = dtype.width();
    if !payload.len().is_multiple_of(width) || payload.len() / width != expected {
        return Err(Error::ShapeMismatch { expected, actual: payload.len() / width });
    }
    match dtype {
        Dtype::F32 => {
            let values: Vec<f32> = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            ActivationTensor::from_f32(rows, cols, &values)
        }
        Dtype::F64 => {
            let values: Vec<f64> = payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            ActivationTensor::from_f64(rows, cols, values)
        }
    }
}

/// Loads a dump file. f64 payloads stay f64.
pub fn load_dump(path: impl AsRef<Path>) -> Result<ActivationTensor> {
    decode(&fs::read(path)?)
}

/// Loads a dump file and narrows f64 payloads to f32.
pub fn load_dump_narrowed(path: impl AsRef<Path>) -> Result<ActivationTensor> {
    let t = load_dump(path)?;
    match t.dtype() {
        Dtype::F32 => Ok(t),
        Dtype::F64 => t.to_f32(),
    }
}

pub fn save_dump(t: &ActivationTensor, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode(t))?;
    w.flush()?;
    Ok(())
}
