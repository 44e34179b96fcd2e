//! Minimal binary PGM (P5, maxval 255) encode/decode, used for mask frames
//! and attention heatmaps. Kept dependency-free so golden files stay
//! bit-exact.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PgmError {
    #[error("not a P5 PGM file")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("payload has {found} bytes, expected {expected}")]
    BadPayload { expected: usize, found: usize },
}

/// Grayscale image, row-major `height×width` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
        }
    }
}

pub fn encode(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn decode(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if !bytes.starts_with(b"P5\n") {
        return Err(PgmError::BadMagic);
    }
    let rest = &bytes[3..];
    let newline = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| PgmError::BadHeader("missing dimensions line".into()))?;
    let dims = std::str::from_utf8(&rest[..newline])
        .map_err(|_| PgmError::BadHeader("dimensions not UTF-8".into()))?;
    let mut it = dims.split_whitespace();
    let width: usize = it
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or_else(|| PgmError::BadHeader("bad width".into()))?;
    let height: usize = it
        .next()
        .and_then(|h| h.parse().ok())
        .ok_or_else(|| PgmError::BadHeader("bad height".into()))?;
    let rest = &rest[newline + 1..];
    let newline = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| PgmError::BadHeader("missing maxval line".into()))?;
    if &rest[..newline] != b"255" {
        return Err(PgmError::BadHeader("maxval must be 255".into()));
    }
    let payload = &rest[newline + 1..];
    if payload.len() != width * height {
        return Err(PgmError::BadPayload {
            expected: width * height,
            found: payload.len(),
        });
    }
    Ok(GrayImage::new(width, height, payload.to_vec()))
}
