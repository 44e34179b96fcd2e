//! The "TSA1" tensor file format.
//!
//! Layout (little-endian throughout, no alignment padding):
//! - bytes 0..4   magic `TSA1`
//! - byte  4      dtype code (`0x01` = f32)
//! - byte  5      ndim (1 or 2)
//! - bytes 6..8   zero padding
//! - ndim × u32   dims
//! - payload      row-major f32 values
//!
//! Round trips are bit-exact. Files containing NaN or infinity are rejected
//! on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor2;

pub const MAGIC: [u8; 4] = *b"TSA1";
pub const DTYPE_F32: u8 = 0x01;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"TSA1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported dtype code {0:#04x}")]
    UnsupportedDtype(u8),
    #[error("unsupported ndim {0}, expected 1 or 2")]
    BadNdim(u8),
    #[error("header padding bytes must be zero")]
    BadPadding,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("dimension product overflows")]
    DimOverflow,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_finite(data: &[f32]) -> Result<(), FormatError> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(FormatError::NonFinite(i)),
        None => Ok(()),
    }
}

fn write_header(w: &mut impl Write, dims: &[u32]) -> Result<(), FormatError> {
    w.write_all(&MAGIC)?;
    w.write_all(&[DTYPE_F32, dims.len() as u8, 0, 0])?;
    for d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

fn write_payload(w: &mut impl Write, data: &[f32]) -> Result<(), FormatError> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_tensor2(path: impl AsRef<Path>, t: &Tensor2) -> Result<(), FormatError> {
    check_finite(t.data())?;
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, &[t.rows() as u32, t.cols() as u32])?;
    write_payload(&mut w, t.data())?;
    w.flush()?;
    Ok(())
}

pub fn write_tensor1(path: impl AsRef<Path>, data: &[f32]) -> Result<(), FormatError> {
    check_finite(data)?;
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, &[data.len() as u32])?;
    write_payload(&mut w, data)?;
    w.flush()?;
    Ok(())
}

/// A tensor read back from a TSA1 file, preserving its rank.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    Rank1(Vec<f32>),
    Rank2(Tensor2),
}

impl StoredTensor {
    pub fn values(&self) -> &[f32] {
        match self {
            StoredTensor::Rank1(v) => v,
            StoredTensor::Rank2(t) => t.data(),
        }
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<StoredTensor, FormatError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 8];
    read_exact_or_truncated(&mut r, &mut header, 8)?;

    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    if header[4] != DTYPE_F32 {
        return Err(FormatError::UnsupportedDtype(header[4]));
    }
    let ndim = header[5];
    if ndim != 1 && ndim != 2 {
        return Err(FormatError::BadNdim(ndim));
    }
    if header[6] != 0 || header[7] != 0 {
        return Err(FormatError::BadPadding);
    }

    let mut dims = [0usize; 2];
    for dim in dims.iter_mut().take(ndim as usize) {
        let mut buf = [0u8; 4];
        read_exact_or_truncated(&mut r, &mut buf, 4)?;
        *dim = u32::from_le_bytes(buf) as usize;
    }
    let count = match ndim {
        1 => dims[0],
        _ => dims[0]
            .checked_mul(dims[1])
            .ok_or(FormatError::DimOverflow)?,
    };

    let expected = count.checked_mul(4).ok_or(FormatError::DimOverflow)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes);
    }

    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    check_finite(&data)?;

    match ndim {
        1 => Ok(StoredTensor::Rank1(data)),
        _ => Ok(StoredTensor::Rank2(
            Tensor2::new(dims[0], dims[1], data).expect("dims checked against payload"),
        )),
    }
}

/// Convenience wrapper that insists the file holds a rank-2 tensor.
pub fn read_tensor2(path: impl AsRef<Path>) -> Result<Tensor2, FormatError> {
    match read_tensor(path)? {
        StoredTensor::Rank2(t) => Ok(t),
        StoredTensor::Rank1(_) => Err(FormatError::BadNdim(1)),
    }
}

fn read_exact_or_truncated(
    r: &mut impl Read,
    buf: &mut [u8],
    expected: usize,
) -> Result<(), FormatError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(FormatError::Truncated {
                expected,
                found: filled,
            });
        }
        filled += n;
    }
    Ok(())
}
