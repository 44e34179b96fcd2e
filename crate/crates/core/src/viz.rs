//! Heatmap fields for attention inspection: per event, per frame, the mean
//! attention each video token pays to the event's text columns, min–max
//! normalized per event across all frames and quantized to 8-bit grayscale.

use thiserror::Error;

use crate::layout::{Span, VideoGrid};
use crate::pgm::GrayImage;
use crate::tensor::Tensor2;

#[derive(Debug, Error, PartialEq)]
pub enum VizError {
    #[error("attention is {rows}x{cols} but the layout implies {n} tokens x {m} text tokens")]
    LayoutMismatch {
        rows: usize,
        cols: usize,
        n: usize,
        m: usize,
    },
    #[error("event span [{start},{end}) is empty or out of bounds")]
    BadSpan { start: usize, end: usize },
}

/// Per-frame grayscale heatmaps for one event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHeatmaps {
    pub frames: Vec<GrayImage>,
}

/// Mean attention over `span` for every video token, as one `f64` per token.
pub fn event_field(attention: &Tensor2, span: Span) -> Vec<f64> {
    let width = span.len() as f64;
    attention
        .iter_rows()
        .map(|row| {
            row[span.indices()]
                .iter()
                .map(|&v| f64::from(v))
                .sum::<f64>()
                / width
        })
        .collect()
}

/// Quantize a field to `[0,255]` with min–max normalization over the whole
/// field; a degenerate (constant) field maps to all zeros.
pub fn quantize_field(field: &[f64]) -> Vec<u8> {
    let min = field.iter().copied().fold(f64::INFINITY, f64::min);
    let max = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) {
        return vec![0; field.len()];
    }
    field
        .iter()
        .map(|&v| (255.0 * (v - min) / range).round() as u8)
        .collect()
}

/// Heatmaps for one event: one `H×W` image per frame, normalized per event
/// across all frames.
pub fn event_heatmaps(
    attention: &Tensor2,
    grid: &VideoGrid,
    span: Span,
) -> Result<EventHeatmaps, VizError> {
    if attention.rows() != grid.tokens() {
        return Err(VizError::LayoutMismatch {
            rows: attention.rows(),
            cols: attention.cols(),
            n: grid.tokens(),
            m: attention.cols(),
        });
    }
    if span.is_empty() || span.end > attention.cols() {
        return Err(VizError::BadSpan {
            start: span.start,
            end: span.end,
        });
    }
    let field = event_field(attention, span);
    let quantized = quantize_field(&field);
    let per = grid.tokens_per_frame();
    let frames = (0..grid.frames)
        .map(|f| {
            GrayImage::new(
                grid.width,
                grid.height,
                quantized[f * per..(f + 1) * per].to_vec(),
            )
        })
        .collect();
    Ok(EventHeatmaps { frames })
}

/// Render one mask frame as a 0/255 image.
pub fn mask_frame_image(bits: &[u8], grid: &VideoGrid, frame: usize) -> GrayImage {
    let per = grid.tokens_per_frame();
    let pixels = bits[frame * per..(frame + 1) * per]
        .iter()
        .map(|&b| b * 255)
        .collect();
    GrayImage::new(grid.width, grid.height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_attention_quantizes_to_zero() {
        let grid = VideoGrid::new(2, 2, 2);
        let attn = Tensor2::new(8, 4, vec![0.25; 32]).unwrap();
        let maps = event_heatmaps(&attn, &grid, Span::new(0, 2)).unwrap();
        for img in &maps.frames {
            assert!(img.pixels.iter().all(|&p| p == 0));
        }
    }

    #[test]
    fn one_hot_attention_lights_one_pixel() {
        let grid = VideoGrid::new(2, 2, 2);
        let mut attn = Tensor2::zeros(8, 4);
        // Token 5 = frame 1, h 0, w 1 attends fully to column 0.
        attn.set(5, 0, 1.0);
        let maps = event_heatmaps(&attn, &grid, Span::new(0, 1)).unwrap();
        assert!(maps.frames[0].pixels.iter().all(|&p| p == 0));
        assert_eq!(maps.frames[1].pixels, vec![0, 255, 0, 0]);
    }

    #[test]
    fn quantization_is_idempotent() {
        let field = vec![0.1, 0.9, 0.4, 0.4, 0.7];
        let q1 = quantize_field(&field);
        let as_field: Vec<f64> = q1.iter().map(|&p| f64::from(p)).collect();
        let q2 = quantize_field(&as_field);
        assert_eq!(q1, q2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let grid = VideoGrid::new(2, 2, 2);
        let attn = Tensor2::zeros(6, 4);
        assert!(matches!(
            event_heatmaps(&attn, &grid, Span::new(0, 1)),
            Err(VizError::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn mask_frames_render_binary() {
        let grid = VideoGrid::new(2, 1, 2);
        let bits = [1, 0, 0, 1];
        assert_eq!(mask_frame_image(&bits, &grid, 0).pixels, vec![255, 0]);
        assert_eq!(mask_frame_image(&bits, &grid, 1).pixels, vec![0, 255]);
    }
}
