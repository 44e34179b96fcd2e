//! Motion region extraction: project the subject's text columns out of the
//! scaled query-key product, threshold at the mean, and clean the binary map
//! with a per-frame square erosion.

use thiserror::Error;

use crate::layout::{Span, VideoGrid};
use crate::tensor::{matmul_qk, Tensor2, TensorError};

#[derive(Debug, Error, PartialEq)]
pub enum MotionError {
    #[error("subject span [{start},{end}) is empty or exceeds {m} text tokens")]
    BadSpan { start: usize, end: usize, m: usize },
    #[error("erosion kernel {0} must be odd and >= 1")]
    BadKernel(usize),
    #[error("semantic map has {len} values for a grid of {tokens} tokens")]
    GridMismatch { len: usize, tokens: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Per-video-token response to the subject's text tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub values: Vec<f32>,
    pub grid: VideoGrid,
}

/// Binary motion-region mask, one bit per video token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionMask {
    bits: Vec<u8>,
    grid: VideoGrid,
}

impl MotionMask {
    pub fn new(bits: Vec<u8>, grid: VideoGrid) -> Self {
        debug_assert_eq!(bits.len(), grid.tokens());
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self { bits, grid }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn grid(&self) -> &VideoGrid {
        &self.grid
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Bits of one frame, row-major `H×W`.
    pub fn frame(&self, f: usize) -> &[u8] {
        let per = self.grid.tokens_per_frame();
        &self.bits[f * per..(f + 1) * per]
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.bits.iter().map(|&b| b as f32).collect()
    }
}

/// Mean of the scaled logit columns selected by `subject_span`:
/// one value per video token.
pub fn subject_semantic_map(
    q: &Tensor2,
    k: &Tensor2,
    subject_span: Span,
    grid: VideoGrid,
) -> Result<SemanticMap, MotionError> {
    if subject_span.is_empty() || subject_span.end > k.rows() {
        return Err(MotionError::BadSpan {
            start: subject_span.start,
            end: subject_span.end,
            m: k.rows(),
        });
    }
    if q.rows() != grid.tokens() {
        return Err(MotionError::GridMismatch {
            len: q.rows(),
            tokens: grid.tokens(),
        });
    }
    let logits = matmul_qk(q, k)?;
    Ok(semantic_map_from_logits(
        &logits,
        q.cols(),
        subject_span,
        grid,
    ))
}

/// Same as [`subject_semantic_map`] over an already computed `Q·Kᵀ`, scaled
/// by `1/√d`.
pub fn semantic_map_from_logits(
    logits: &Tensor2,
    d: usize,
    subject_span: Span,
    grid: VideoGrid,
) -> SemanticMap {
    let scale = 1.0 / (d as f64).sqrt();
    let width = subject_span.len() as f64;
    let values = logits
        .iter_rows()
        .map(|row| {
            let sum: f64 = row[subject_span.indices()]
                .iter()
                .map(|&v| f64::from(v))
                .sum();
            (sum / width * scale) as f32
        })
        .collect();
    SemanticMap { values, grid }
}

/// Indicator of `value >= mean(values)`; ties at the mean are kept.
pub fn adaptive_threshold(map: &SemanticMap) -> Vec<u8> {
    let mean: f64 = map.values.iter().map(|&v| f64::from(v)).sum::<f64>() / map.values.len() as f64;
    map.values
        .iter()
        .map(|&v| u8::from(f64::from(v) >= mean))
        .collect()
}

/// Per-frame binary erosion with a `k×k` square structuring element and zero
/// padding at frame borders. Frames never erode into each other.
pub fn erode_mask(bits: &[u8], grid: VideoGrid, kernel: usize) -> Result<MotionMask, MotionError> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(MotionError::BadKernel(kernel));
    }
    if bits.len() != grid.tokens() {
        return Err(MotionError::GridMismatch {
            len: bits.len(),
            tokens: grid.tokens(),
        });
    }
    if kernel == 1 {
        return Ok(MotionMask::new(bits.to_vec(), grid));
    }
    let r = kernel / 2;
    let (h, w) = (grid.height, grid.width);
    let per = grid.tokens_per_frame();
    let mut out = vec![0u8; bits.len()];
    for f in 0..grid.frames {
        let src = &bits[f * per..(f + 1) * per];
        let dst = &mut out[f * per..(f + 1) * per];
        for y in 0..h {
            'pixel: for x in 0..w {
                if y < r || y + r >= h || x < r || x + r >= w {
                    continue; // zero padding erodes the border
                }
                for dy in y - r..=y + r {
                    for dx in x - r..=x + r {
                        if src[dy * w + dx] == 0 {
                            continue 'pixel;
                        }
                    }
                }
                dst[y * w + x] = 1;
            }
        }
    }
    Ok(MotionMask::new(out, grid))
}

/// Full pipeline: semantic map → mean threshold → per-frame erosion.
pub fn motion_mask(
    q: &Tensor2,
    k: &Tensor2,
    subject_span: Span,
    grid: VideoGrid,
    kernel: usize,
) -> Result<MotionMask, MotionError> {
    let map = subject_semantic_map(q, k, subject_span, grid)?;
    erode_mask(&adaptive_threshold(&map), grid, kernel)
}

/// Pipeline over precomputed logits, sharing `Q·Kᵀ` with the modulation path.
pub fn motion_mask_from_logits(
    logits: &Tensor2,
    d: usize,
    subject_span: Span,
    grid: VideoGrid,
    kernel: usize,
) -> Result<MotionMask, MotionError> {
    if subject_span.is_empty() || subject_span.end > logits.cols() {
        return Err(MotionError::BadSpan {
            start: subject_span.start,
            end: subject_span.end,
            m: logits.cols(),
        });
    }
    if logits.rows() != grid.tokens() {
        return Err(MotionError::GridMismatch {
            len: logits.rows(),
            tokens: grid.tokens(),
        });
    }
    let map = semantic_map_from_logits(logits, d, subject_span, grid);
    erode_mask(&adaptive_threshold(&map), grid, kernel)
}
