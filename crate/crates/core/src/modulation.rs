//! Event-aware attention modulation.
//!
//! For each temporally segmented block of video queries, motion-region rows
//! receive an additive logit bias: a nonnegative push toward the columns of
//! the temporally aligned event and a nonpositive push away from other
//! events' columns, scaled elementwise by a reinforcement factor in
//! `[r_min, r_max]` that grows where the existing attention distribution is
//! flat. The biased logits are divided by `√d` and softmaxed.
//!
//! Two routes produce the same result: a fused path that computes per-row
//! statistics once and writes deltas only into event-span columns of masked
//! rows, and a dense reference path that materializes the full `N×M` bias
//! and reinforcement matrices. The dense path is the ground truth the fused
//! path is tested against.

use std::ops::Range;

use thiserror::Error;

use crate::layout::{frames_to_token_ranges, Layout, ModulationParams, Span};
use crate::tensor::{
    matmul_qk, reduce_row, row_softmax, softmax_row, Reduce, Tensor2, TensorError,
};

/// Dense-path size guard: `N·M` may not exceed this.
pub const ORACLE_CELL_LIMIT: usize = 1 << 22;

#[derive(Debug, Error, PartialEq)]
pub enum ModulationError {
    #[error("shape mismatch: {context} ({left} vs {right})")]
    ShapeMismatch {
        context: &'static str,
        left: String,
        right: String,
    },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("mask has {found} entries, expected {expected}")]
    MaskLength { expected: usize, found: usize },
    #[error("dense path refused: {n}x{m} exceeds {limit} cells")]
    OracleSize { n: usize, m: usize, limit: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Everything the modulation needs to know about one subject: its motion
/// mask, the per-event token ranges (the temporal query split), and the
/// per-event text spans.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectModulation {
    pub mask: Vec<u8>,
    pub token_ranges: Vec<Range<usize>>,
    pub event_spans: Vec<Span>,
}

impl SubjectModulation {
    pub fn new(mask: Vec<u8>, token_ranges: Vec<Range<usize>>, event_spans: Vec<Span>) -> Self {
        Self {
            mask,
            token_ranges,
            event_spans,
        }
    }

    /// Derive the token split and event spans for one subject of a layout.
    pub fn from_layout(
        layout: &Layout,
        subject_idx: usize,
        mask: Vec<u8>,
    ) -> Result<Self, ModulationError> {
        let subject = layout.text.subjects.get(subject_idx).ok_or_else(|| {
            ModulationError::InvalidPlan(format!("layout has no subject {subject_idx}"))
        })?;
        let plan = layout.subject_plan(subject_idx);
        let token_ranges = frames_to_token_ranges(&plan, &layout.video);
        let event_spans = subject.events.iter().map(|e| e.span).collect();
        Ok(Self {
            mask,
            token_ranges,
            event_spans,
        })
    }

    fn validate(&self, n: usize, m: usize) -> Result<(), ModulationError> {
        if self.mask.len() != n {
            return Err(ModulationError::MaskLength {
                expected: n,
                found: self.mask.len(),
            });
        }
        if self.token_ranges.is_empty() || self.token_ranges.len() != self.event_spans.len() {
            return Err(ModulationError::InvalidPlan(format!(
                "{} token ranges for {} event spans",
                self.token_ranges.len(),
                self.event_spans.len()
            )));
        }
        let mut cursor = 0;
        for r in &self.token_ranges {
            if r.start != cursor || r.is_empty() {
                return Err(ModulationError::InvalidPlan(format!(
                    "token ranges do not partition [0,{n}): bad range [{},{})",
                    r.start, r.end
                )));
            }
            cursor = r.end;
        }
        if cursor != n {
            return Err(ModulationError::InvalidPlan(format!(
                "token ranges cover [0,{cursor}) instead of [0,{n})"
            )));
        }
        for (i, span) in self.event_spans.iter().enumerate() {
            if span.is_empty() || span.end > m {
                return Err(ModulationError::InvalidPlan(format!(
                    "event {i} span [{},{}) out of bounds for {m} columns",
                    span.start, span.end
                )));
            }
            for (j, other) in self.event_spans.iter().enumerate().skip(i + 1) {
                if span.overlaps(other) {
                    return Err(ModulationError::InvalidPlan(format!(
                        "event spans {i} and {j} overlap"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Segment index owning token `x`.
    pub fn segment_of(&self, x: usize) -> usize {
        self.token_ranges
            .iter()
            .position(|r| r.contains(&x))
            .expect("validated partition")
    }
}

/// Per-row rearrangement bias for masked rows: a nonnegative value on the
/// aligned event span, a nonpositive value on other event spans, zero
/// elsewhere. Logically `N×M`; only masked rows are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasMatrix {
    rows: usize,
    cols: usize,
    spans: Vec<Span>,
    entries: Vec<BiasRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasRow {
    pub row: usize,
    pub aligned: usize,
    pub positive: f32,
    pub negative: f32,
}

impl BiasMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[BiasRow] {
        &self.entries
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    /// Materialize to a dense matrix (zeros outside stored rows and spans).
    pub fn to_dense(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.rows, self.cols);
        for e in &self.entries {
            let row = out.row_mut(e.row);
            for (j, span) in self.spans.iter().enumerate() {
                let v = if j == e.aligned {
                    e.positive
                } else {
                    e.negative
                };
                for y in span.indices() {
                    row[y] = v;
                }
            }
        }
        out
    }
}

/// Per-row reinforcement factors for masked rows, covering the concatenated
/// event-span columns; zero elsewhere. Same storage scheme as [`BiasMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReinforcementMatrix {
    rows: usize,
    cols: usize,
    spans: Vec<Span>,
    entries: Vec<ReinforcementRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReinforcementRow {
    pub row: usize,
    /// One factor per column of the concatenated event spans, span order.
    pub values: Vec<f32>,
}

impl ReinforcementMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[ReinforcementRow] {
        &self.entries
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn to_dense(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.rows, self.cols);
        for e in &self.entries {
            let row = out.row_mut(e.row);
            let mut offset = 0;
            for span in &self.spans {
                for y in span.indices() {
                    row[y] = e.values[offset];
                    offset += 1;
                }
            }
        }
        out
    }
}

fn dim_scale(d: usize) -> f32 {
    (d as f64).sqrt() as f32
}

/// Build the sparse bias and reinforcement artifacts for one subject from a
/// precomputed `Q·Kᵀ`. Only event-span columns of masked rows are computed.
pub fn subject_artifacts_from_logits(
    logits: &Tensor2,
    d: usize,
    subject: &SubjectModulation,
    params: &ModulationParams,
) -> Result<(BiasMatrix, ReinforcementMatrix), ModulationError> {
    let (n, m) = (logits.rows(), logits.cols());
    subject.validate(n, m)?;
    let sqrt_d = dim_scale(d);
    let spread = params.r_max - params.r_min;
    let span_cells: usize = subject.event_spans.iter().map(|s| s.len()).sum();

    let mut bias_entries = Vec::new();
    let mut reinf_entries = Vec::new();
    let mut scaled = vec![0.0f32; m];
    let mut probs = vec![0.0f32; m];

    for (i, range) in subject.token_ranges.iter().enumerate() {
        for x in range.clone() {
            if subject.mask[x] == 0 {
                continue;
            }
            let row = logits.row(x);
            let max = reduce_row(row, Reduce::Max);
            let min = reduce_row(row, Reduce::Min);
            let mean = reduce_row(row, Reduce::Mean);
            bias_entries.push(BiasRow {
                row: x,
                aligned: i,
                positive: max - mean,
                negative: min - mean,
            });

            for (s, l) in scaled.iter_mut().zip(row) {
                *s = l / sqrt_d;
            }
            softmax_row(&scaled, &mut probs);
            let p_min = reduce_row(&probs, Reduce::Min);
            let p_max = reduce_row(&probs, Reduce::Max);
            let denom = p_max - p_min + params.epsilon;

            let mut values = Vec::with_capacity(span_cells);
            for (j, span) in subject.event_spans.iter().enumerate() {
                for y in span.indices() {
                    let intensity = (probs[y] - p_min) / denom;
                    let r = if j == i {
                        params.r_min + (1.0 - intensity) * spread
                    } else {
                        params.r_min + intensity * spread
                    };
                    values.push(r);
                }
            }
            reinf_entries.push(ReinforcementRow { row: x, values });
        }
    }

    Ok((
        BiasMatrix {
            rows: n,
            cols: m,
            spans: subject.event_spans.clone(),
            entries: bias_entries,
        },
        ReinforcementMatrix {
            rows: n,
            cols: m,
            spans: subject.event_spans.clone(),
            entries: reinf_entries,
        },
    ))
}

/// [`subject_artifacts_from_logits`] with the product computed here.
pub fn subject_artifacts(
    q: &Tensor2,
    k: &Tensor2,
    subject: &SubjectModulation,
    params: &ModulationParams,
) -> Result<(BiasMatrix, ReinforcementMatrix), ModulationError> {
    let logits = matmul_qk(q, k)?;
    subject_artifacts_from_logits(&logits, q.cols(), subject, params)
}

/// One subject's contribution to the modulated attention.
#[derive(Debug, Clone, Copy)]
pub struct ModulationTerm<'a> {
    pub mask: &'a [u8],
    pub bias: &'a BiasMatrix,
    pub reinforcement: &'a ReinforcementMatrix,
}

fn accumulate_term(delta: &mut Tensor2, term: &ModulationTerm<'_>) -> Result<(), ModulationError> {
    let (n, m) = (delta.rows(), delta.cols());
    if term.bias.rows != n || term.bias.cols != m {
        return Err(ModulationError::ShapeMismatch {
            context: "bias matrix",
            left: format!("{}x{}", term.bias.rows, term.bias.cols),
            right: format!("{n}x{m}"),
        });
    }
    if term.reinforcement.rows != n || term.reinforcement.cols != m {
        return Err(ModulationError::ShapeMismatch {
            context: "reinforcement matrix",
            left: format!("{}x{}", term.reinforcement.rows, term.reinforcement.cols),
            right: format!("{n}x{m}"),
        });
    }
    if term.mask.len() != n {
        return Err(ModulationError::MaskLength {
            expected: n,
            found: term.mask.len(),
        });
    }
    if term.bias.spans != term.reinforcement.spans
        || term.bias.entries.len() != term.reinforcement.entries.len()
    {
        return Err(ModulationError::ShapeMismatch {
            context: "bias/reinforcement artifacts",
            left: format!("{} rows", term.bias.entries.len()),
            right: format!("{} rows", term.reinforcement.entries.len()),
        });
    }

    for (b, r) in term.bias.entries.iter().zip(&term.reinforcement.entries) {
        if b.row != r.row {
            return Err(ModulationError::ShapeMismatch {
                context: "bias/reinforcement row order",
                left: b.row.to_string(),
                right: r.row.to_string(),
            });
        }
        if term.mask[b.row] == 0 {
            continue;
        }
        let out = delta.row_mut(b.row);
        let mut offset = 0;
        for (j, span) in term.bias.spans.iter().enumerate() {
            let bias_value = if j == b.aligned {
                b.positive
            } else {
                b.negative
            };
            for y in span.indices() {
                out[y] += r.values[offset] * bias_value;
                offset += 1;
            }
        }
    }
    Ok(())
}

fn combine(logits: &Tensor2, delta: &Tensor2, d: usize) -> Tensor2 {
    let sqrt_d = dim_scale(d);
    let (n, m) = (logits.rows(), logits.cols());
    let mut out = Tensor2::zeros(n, m);
    let mut scaled = vec![0.0f32; m];
    for x in 0..n {
        let l = logits.row(x);
        let dl = delta.row(x);
        for ((s, &a), &b) in scaled.iter_mut().zip(l).zip(dl) {
            *s = (a + b) / sqrt_d;
        }
        softmax_row(&scaled, out.row_mut(x));
    }
    out
}

/// Plain scaled-dot-product attention, `softmax(Q·Kᵀ/√d)`.
pub fn vanilla_attention(q: &Tensor2, k: &Tensor2) -> Result<Tensor2, ModulationError> {
    let logits = matmul_qk(q, k)?;
    let delta = Tensor2::zeros(logits.rows(), logits.cols());
    Ok(combine(&logits, &delta, q.cols()))
}

/// Modulated attention for several subjects: per-subject deltas are summed
/// before the shared softmax. An empty subject list degenerates to vanilla
/// attention.
pub fn modulated_attention_multi(
    q: &Tensor2,
    k: &Tensor2,
    terms: &[ModulationTerm<'_>],
) -> Result<Tensor2, ModulationError> {
    let logits = matmul_qk(q, k)?;
    let mut delta = Tensor2::zeros(logits.rows(), logits.cols());
    for term in terms {
        accumulate_term(&mut delta, term)?;
    }
    Ok(combine(&logits, &delta, q.cols()))
}

/// Single-subject modulated attention; same code path as the multi-subject
/// form with one term.
pub fn modulated_attention(
    q: &Tensor2,
    k: &Tensor2,
    mask: &[u8],
    bias: &BiasMatrix,
    reinforcement: &ReinforcementMatrix,
) -> Result<Tensor2, ModulationError> {
    modulated_attention_multi(
        q,
        k,
        &[ModulationTerm {
            mask,
            bias,
            reinforcement,
        }],
    )
}

/// Fused end-to-end path: compute `Q·Kᵀ` once, derive every subject's
/// artifacts from it, and softmax the biased logits. This is the production
/// route; it never materializes dense bias or reinforcement matrices.
pub fn modulate(
    q: &Tensor2,
    k: &Tensor2,
    subjects: &[SubjectModulation],
    params: &ModulationParams,
) -> Result<Tensor2, ModulationError> {
    let logits = matmul_qk(q, k)?;
    let mut delta = Tensor2::zeros(logits.rows(), logits.cols());
    for subject in subjects {
        let (bias, reinforcement) =
            subject_artifacts_from_logits(&logits, q.cols(), subject, params)?;
        accumulate_term(
            &mut delta,
            &ModulationTerm {
                mask: &subject.mask,
                bias: &bias,
                reinforcement: &reinforcement,
            },
        )?;
    }
    Ok(combine(&logits, &delta, q.cols()))
}

// ---------------------------------------------------------------------------
// Dense reference path.
// ---------------------------------------------------------------------------

/// Dense rearrangement bias rows for one segment: per row of `Q_i`, the
/// max/min/mean of the unscaled `Q_i·Kᵀ` row decide the positive and
/// negative bias written across the event spans.
pub fn segment_bias(
    q_segment: &Tensor2,
    k: &Tensor2,
    event_spans: &[Span],
    aligned: usize,
) -> Result<Tensor2, ModulationError> {
    if aligned >= event_spans.len() {
        return Err(ModulationError::InvalidPlan(format!(
            "aligned event {aligned} out of range for {} events",
            event_spans.len()
        )));
    }
    let logits = matmul_qk(q_segment, k)?;
    let mut out = Tensor2::zeros(logits.rows(), logits.cols());
    for x in 0..logits.rows() {
        let row = logits.row(x);
        let max = reduce_row(row, Reduce::Max);
        let min = reduce_row(row, Reduce::Min);
        let mean = reduce_row(row, Reduce::Mean);
        let positive = max - mean;
        let negative = min - mean;
        let out_row = out.row_mut(x);
        for (j, span) in event_spans.iter().enumerate() {
            let v = if j == aligned { positive } else { negative };
            for y in span.indices() {
                out_row[y] = v;
            }
        }
    }
    Ok(out)
}

/// Dense reinforcement rows for one segment: normalized attention intensity
/// mapped affinely into `[r_min, r_max]`, larger where the distribution is
/// flatter on the aligned event and sharper on other events.
pub fn segment_reinforcement(
    q_segment: &Tensor2,
    k: &Tensor2,
    event_spans: &[Span],
    aligned: usize,
    params: &ModulationParams,
) -> Result<Tensor2, ModulationError> {
    if aligned >= event_spans.len() {
        return Err(ModulationError::InvalidPlan(format!(
            "aligned event {aligned} out of range for {} events",
            event_spans.len()
        )));
    }
    let sqrt_d = dim_scale(q_segment.cols());
    let logits = matmul_qk(q_segment, k)?;
    let scaled = logits.map(|v| v / sqrt_d);
    let probs = row_softmax(&scaled);
    let spread = params.r_max - params.r_min;
    let mut out = Tensor2::zeros(logits.rows(), logits.cols());
    for x in 0..probs.rows() {
        let p_row = probs.row(x);
        let p_min = reduce_row(p_row, Reduce::Min);
        let p_max = reduce_row(p_row, Reduce::Max);
        let denom = p_max - p_min + params.epsilon;
        let out_row = out.row_mut(x);
        for (j, span) in event_spans.iter().enumerate() {
            for y in span.indices() {
                let intensity = (p_row[y] - p_min) / denom;
                out_row[y] = if j == aligned {
                    params.r_min + (1.0 - intensity) * spread
                } else {
                    params.r_min + intensity * spread
                };
            }
        }
    }
    Ok(out)
}

fn assemble_blocks(
    blocks: &[Tensor2],
    token_ranges: &[Range<usize>],
    n: usize,
    m: usize,
) -> Result<Tensor2, ModulationError> {
    if blocks.len() != token_ranges.len() {
        return Err(ModulationError::InvalidPlan(format!(
            "{} blocks for {} token ranges",
            blocks.len(),
            token_ranges.len()
        )));
    }
    let mut cursor = 0;
    for (block, range) in blocks.iter().zip(token_ranges) {
        if range.start != cursor || range.is_empty() {
            return Err(ModulationError::InvalidPlan(format!(
                "token ranges do not partition [0,{n}): bad range [{},{})",
                range.start, range.end
            )));
        }
        if block.rows() != range.len() || block.cols() != m {
            return Err(ModulationError::ShapeMismatch {
                context: "segment block",
                left: format!("{}x{}", block.rows(), block.cols()),
                right: format!("{}x{m}", range.len()),
            });
        }
        cursor = range.end;
    }
    if cursor != n {
        return Err(ModulationError::InvalidPlan(format!(
            "token ranges cover [0,{cursor}) instead of [0,{n})"
        )));
    }
    let mut out = Tensor2::zeros(n, m);
    for (block, range) in blocks.iter().zip(token_ranges) {
        for (i, x) in range.clone().enumerate() {
            out.row_mut(x).copy_from_slice(block.row(i));
        }
    }
    Ok(out)
}

/// Concatenate per-segment bias blocks into the full `N×M` bias matrix.
pub fn assemble_bias(
    blocks: &[Tensor2],
    token_ranges: &[Range<usize>],
    n: usize,
    m: usize,
) -> Result<Tensor2, ModulationError> {
    assemble_blocks(blocks, token_ranges, n, m)
}

/// Concatenate per-segment reinforcement blocks, mirroring [`assemble_bias`].
pub fn assemble_reinforcement(
    blocks: &[Tensor2],
    token_ranges: &[Range<usize>],
    n: usize,
    m: usize,
) -> Result<Tensor2, ModulationError> {
    assemble_blocks(blocks, token_ranges, n, m)
}

/// Full dense bias matrix for one subject.
pub fn dense_bias(
    q: &Tensor2,
    k: &Tensor2,
    subject: &SubjectModulation,
) -> Result<Tensor2, ModulationError> {
    subject.validate(q.rows(), k.rows())?;
    let blocks: Vec<Tensor2> = subject
        .token_ranges
        .iter()
        .enumerate()
        .map(|(i, r)| segment_bias(&q.row_block(r.start, r.end), k, &subject.event_spans, i))
        .collect::<Result<_, _>>()?;
    assemble_bias(&blocks, &subject.token_ranges, q.rows(), k.rows())
}

/// Full dense reinforcement matrix for one subject.
pub fn dense_reinforcement(
    q: &Tensor2,
    k: &Tensor2,
    subject: &SubjectModulation,
    params: &ModulationParams,
) -> Result<Tensor2, ModulationError> {
    subject.validate(q.rows(), k.rows())?;
    let blocks: Vec<Tensor2> = subject
        .token_ranges
        .iter()
        .enumerate()
        .map(|(i, r)| {
            segment_reinforcement(
                &q.row_block(r.start, r.end),
                k,
                &subject.event_spans,
                i,
                params,
            )
        })
        .collect::<Result<_, _>>()?;
    assemble_reinforcement(&blocks, &subject.token_ranges, q.rows(), k.rows())
}

/// Reference implementation: materialize every subject's dense bias and
/// reinforcement matrices, apply the broadcast mask, sum the terms, and
/// softmax the scaled result. Refuses instances above [`ORACLE_CELL_LIMIT`].
pub fn dense_oracle(
    q: &Tensor2,
    k: &Tensor2,
    subjects: &[SubjectModulation],
    params: &ModulationParams,
) -> Result<Tensor2, ModulationError> {
    let (n, m) = (q.rows(), k.rows());
    if n.saturating_mul(m) > ORACLE_CELL_LIMIT {
        return Err(ModulationError::OracleSize {
            n,
            m,
            limit: ORACLE_CELL_LIMIT,
        });
    }
    let logits = matmul_qk(q, k)?;
    let mut delta = Tensor2::zeros(n, m);
    for subject in subjects {
        if subject.mask.len() != n {
            return Err(ModulationError::MaskLength {
                expected: n,
                found: subject.mask.len(),
            });
        }
        let bias = dense_bias(q, k, subject)?;
        let reinforcement = dense_reinforcement(q, k, subject, params)?;
        for x in 0..n {
            let mask_value = f32::from(subject.mask[x]);
            let b_row = bias.row(x);
            let r_row = reinforcement.row(x);
            let d_row = delta.row_mut(x);
            for y in 0..m {
                d_row[y] += mask_value * (r_row[y] * b_row[y]);
            }
        }
    }
    let sqrt_d = dim_scale(q.cols());
    let mut biased = Tensor2::zeros(n, m);
    for x in 0..n {
        let l = logits.row(x);
        let d_row = delta.row(x);
        let out = biased.row_mut(x);
        for y in 0..m {
            out[y] = (l[y] + d_row[y]) / sqrt_d;
        }
    }
    Ok(row_softmax(&biased))
}
