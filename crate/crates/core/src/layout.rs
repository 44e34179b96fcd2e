//! Data model for the video token grid, the annotated text layout, and the
//! temporal segmentation that splits video queries into per-event blocks.
//!
//! Token order is frame-major: token `(f, h, w)` lives at `f·H·W + h·W + w`,
//! so every frame interval maps to a contiguous token range. All spans and
//! intervals are half-open.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("coordinates ({f},{h},{w}) out of bounds for grid {frames}x{height}x{width}")]
    OutOfBounds {
        f: usize,
        h: usize,
        w: usize,
        frames: usize,
        height: usize,
        width: usize,
    },
    #[error("infeasible plan: {events} events cannot partition {frames} frames")]
    InfeasiblePlan { events: usize, frames: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

/// Latent video token grid, `F` frames of `H×W` tokens each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoGrid {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl VideoGrid {
    pub fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
        }
    }

    pub fn tokens(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.height * self.width
    }

    pub fn token_index(&self, f: usize, h: usize, w: usize) -> Result<usize, LayoutError> {
        if f >= self.frames || h >= self.height || w >= self.width {
            return Err(LayoutError::OutOfBounds {
                f,
                h,
                w,
                frames: self.frames,
                height: self.height,
                width: self.width,
            });
        }
        Ok(f * self.height * self.width + h * self.width + w)
    }

    /// Inverse of [`VideoGrid::token_index`].
    pub fn token_coords(&self, index: usize) -> Result<(usize, usize, usize), LayoutError> {
        if index >= self.tokens() {
            return Err(LayoutError::OutOfBounds {
                f: index,
                h: 0,
                w: 0,
                frames: self.frames,
                height: self.height,
                width: self.width,
            });
        }
        let per_frame = self.tokens_per_frame();
        let f = index / per_frame;
        let rem = index % per_frame;
        Ok((f, rem / self.width, rem % self.width))
    }
}

/// Half-open range of text token indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, idx: usize) -> bool {
        idx >= self.start && idx < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

/// Half-open range of latent frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct FrameInterval {
    pub start: usize,
    pub end: usize,
}

impl FrameInterval {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

impl From<[usize; 2]> for FrameInterval {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<FrameInterval> for [usize; 2] {
    fn from(i: FrameInterval) -> Self {
        [i.start, i.end]
    }
}

/// One event phrase: its text span and the frame interval it is aligned to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub span: Span,
    #[serde(default = "empty_interval")]
    pub frames: FrameInterval,
    /// Free-text event description; used by the segmentation planner prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

fn empty_interval() -> FrameInterval {
    FrameInterval::new(0, 0)
}

/// A subject with its naming span and ordered event list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub name: String,
    pub subject_span: Span,
    pub events: Vec<EventSpec>,
}

/// Ordered per-event frame intervals for one subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationPlan {
    pub intervals: Vec<FrameInterval>,
}

impl SegmentationPlan {
    pub fn new(intervals: Vec<FrameInterval>) -> Self {
        Self { intervals }
    }

    pub fn is_partition_of(&self, frames: usize) -> bool {
        let mut cursor = 0;
        for iv in &self.intervals {
            if iv.start != cursor || iv.is_empty() {
                return false;
            }
            cursor = iv.end;
        }
        cursor == frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadMaskPolicy {
    #[serde(rename = "per-head")]
    PerHead,
    #[serde(rename = "head-averaged")]
    HeadAveraged,
}

pub const DEFAULT_R_MIN: f32 = 1.0;
pub const DEFAULT_R_MAX: f32 = 1.5;
pub const DEFAULT_KERNEL: usize = 3;
pub const DEFAULT_EPSILON: f32 = 1e-6;
pub const DEFAULT_APPLY_FRACTION: f64 = 0.2;
pub const DEFAULT_APPLY_FRACTION_I2V: f64 = 0.4;

/// Knobs of the modulation: reinforcement bounds, erosion kernel, the
/// normalizer epsilon, the leading fraction of steps to gate on, and how
/// multi-head masks are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulationParams {
    pub r_min: f32,
    pub r_max: f32,
    pub kernel: usize,
    pub epsilon: f32,
    pub apply_fraction: f64,
    pub head_mask_policy: HeadMaskPolicy,
}

impl Default for ModulationParams {
    fn default() -> Self {
        Self {
            r_min: DEFAULT_R_MIN,
            r_max: DEFAULT_R_MAX,
            kernel: DEFAULT_KERNEL,
            epsilon: DEFAULT_EPSILON,
            apply_fraction: DEFAULT_APPLY_FRACTION,
            head_mask_policy: HeadMaskPolicy::PerHead,
        }
    }
}

/// Text side of a layout: token count plus annotated subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLayout {
    pub num_tokens: usize,
    pub subjects: Vec<SubjectSpec>,
}

/// The full layout document: video grid, text layout, and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub video: VideoGrid,
    pub text: TextLayout,
    #[serde(default)]
    pub params: ModulationParams,
}

impl Layout {
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn subject_plan(&self, subject: usize) -> SegmentationPlan {
        SegmentationPlan::new(
            self.text.subjects[subject]
                .events
                .iter()
                .map(|e| e.frames)
                .collect(),
        )
    }
}

/// Partition `[0, frames)` into `events` contiguous intervals whose sizes
/// differ by at most one; remainder frames go to the earliest intervals.
pub fn uniform_segmentation(frames: usize, events: usize) -> Result<SegmentationPlan, LayoutError> {
    if events == 0 || events > frames {
        return Err(LayoutError::InfeasiblePlan { events, frames });
    }
    let base = frames / events;
    let remainder = frames % events;
    let mut intervals = Vec::with_capacity(events);
    let mut cursor = 0;
    for i in 0..events {
        let len = base + usize::from(i < remainder);
        intervals.push(FrameInterval::new(cursor, cursor + len));
        cursor += len;
    }
    Ok(SegmentationPlan::new(intervals))
}

/// Turn ordered, possibly overlapping intervals covering `[0, frames)` into
/// an exact partition. An overlap `[a, b)` between consecutive intervals is
/// split at `⌊(a+b)/2⌋` with the earlier event keeping the first half.
/// Gaps, containment, and splits that empty an interval are rejected.
pub fn resolve_overlaps(
    intervals: &[FrameInterval],
    frames: usize,
) -> Result<SegmentationPlan, LayoutError> {
    if intervals.is_empty() {
        return Err(LayoutError::InvalidPlan("no intervals".into()));
    }
    let mut out = intervals.to_vec();
    for w in out.windows(2) {
        if w[1].start < w[0].start {
            return Err(LayoutError::InvalidPlan(format!(
                "intervals not ordered by start: [{},{}) before [{},{})",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
    }
    if out[0].start != 0 {
        return Err(LayoutError::InvalidPlan(format!(
            "coverage gap: first interval starts at {}",
            out[0].start
        )));
    }
    for i in 1..out.len() {
        let prev_end = out[i - 1].end;
        let cur = out[i];
        if cur.end <= prev_end {
            return Err(LayoutError::InvalidPlan(format!(
                "interval [{},{}) adds no exclusive frames beyond [{},{})",
                cur.start,
                cur.end,
                out[i - 1].start,
                prev_end
            )));
        }
        if cur.start > prev_end {
            return Err(LayoutError::InvalidPlan(format!(
                "coverage gap between frame {} and frame {}",
                prev_end, cur.start
            )));
        }
        if cur.start < prev_end {
            let mid = (cur.start + prev_end) / 2;
            out[i - 1].end = mid;
            out[i].start = mid;
        }
    }
    if out.last().unwrap().end != frames {
        return Err(LayoutError::InvalidPlan(format!(
            "coverage ends at frame {} instead of {}",
            out.last().unwrap().end,
            frames
        )));
    }
    if let Some(empty) = out.iter().find(|iv| iv.is_empty()) {
        return Err(LayoutError::InvalidPlan(format!(
            "overlap split leaves empty interval [{},{})",
            empty.start, empty.end
        )));
    }
    Ok(SegmentationPlan::new(out))
}

/// Map per-event frame intervals to contiguous token index ranges.
pub fn frames_to_token_ranges(
    plan: &SegmentationPlan,
    grid: &VideoGrid,
) -> Vec<std::ops::Range<usize>> {
    let per_frame = grid.tokens_per_frame();
    plan.intervals
        .iter()
        .map(|iv| iv.start * per_frame..iv.end * per_frame)
        .collect()
}

/// One layout problem found by [`validate_layout`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutDiagnostic {
    pub subject: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for LayoutDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.subject {
            Some(s) => write!(f, "subject {}: {}", s, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Check span bounds, span disjointness, the per-subject partition property,
/// and parameter invariants. Returns every violation found.
pub fn validate_layout(layout: &Layout) -> Vec<LayoutDiagnostic> {
    let mut diags = Vec::new();
    let m = layout.text.num_tokens;
    let push = |diags: &mut Vec<LayoutDiagnostic>, subject, message: String| {
        diags.push(LayoutDiagnostic { subject, message });
    };

    if layout.video.frames == 0 || layout.video.height == 0 || layout.video.width == 0 {
        push(
            &mut diags,
            None,
            format!(
                "video grid {}x{}x{} has a zero dimension",
                layout.video.frames, layout.video.height, layout.video.width
            ),
        );
    }
    if layout.text.subjects.is_empty() {
        push(&mut diags, None, "layout has no subjects".into());
    }

    let p = &layout.params;
    if !(p.r_min >= 1.0) {
        push(&mut diags, None, format!("r_min {} must be >= 1", p.r_min));
    }
    if !(p.r_min <= p.r_max) {
        push(
            &mut diags,
            None,
            format!("r_min {} must be <= r_max {}", p.r_min, p.r_max),
        );
    }
    if p.kernel == 0 || p.kernel.is_multiple_of(2) {
        push(
            &mut diags,
            None,
            format!("erosion kernel {} must be odd and >= 1", p.kernel),
        );
    }
    if !(p.epsilon > 0.0) {
        push(
            &mut diags,
            None,
            format!("epsilon {} must be > 0", p.epsilon),
        );
    }
    if !(p.apply_fraction > 0.0 && p.apply_fraction <= 1.0) {
        push(
            &mut diags,
            None,
            format!("apply_fraction {} must be in (0,1]", p.apply_fraction),
        );
    }

    for (si, subject) in layout.text.subjects.iter().enumerate() {
        let subj = Some(si);
        if subject.events.is_empty() {
            push(&mut diags, subj, "subject has no events".into());
        }
        let check_span = |diags: &mut Vec<LayoutDiagnostic>, label: &str, span: &Span| {
            if span.is_empty() || span.end > m {
                push(
                    diags,
                    subj,
                    format!(
                        "{label} span [{},{}) out of bounds for {m} text tokens",
                        span.start, span.end
                    ),
                );
            }
        };
        check_span(&mut diags, "subject", &subject.subject_span);
        for (ei, event) in subject.events.iter().enumerate() {
            check_span(&mut diags, &format!("event {ei}"), &event.span);
            if event.span.overlaps(&subject.subject_span) {
                push(
                    &mut diags,
                    subj,
                    format!(
                        "event {ei} span [{},{}) overlaps subject span [{},{})",
                        event.span.start,
                        event.span.end,
                        subject.subject_span.start,
                        subject.subject_span.end
                    ),
                );
            }
            for (ej, other) in subject.events.iter().enumerate().skip(ei + 1) {
                if event.span.overlaps(&other.span) {
                    push(
                        &mut diags,
                        subj,
                        format!("event {ei} span overlaps event {ej} span"),
                    );
                }
            }
            if event.frames.end > layout.video.frames {
                push(
                    &mut diags,
                    subj,
                    format!(
                        "event {ei} frames [{},{}) exceed {} frames",
                        event.frames.start, event.frames.end, layout.video.frames
                    ),
                );
            }
        }
        let plan = SegmentationPlan::new(subject.events.iter().map(|e| e.frames).collect());
        if !plan.is_partition_of(layout.video.frames) {
            push(
                &mut diags,
                subj,
                format!(
                    "event frame intervals do not partition [0,{})",
                    layout.video.frames
                ),
            );
        }
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_index_corners() {
        let g = VideoGrid::new(2, 2, 2);
        assert_eq!(g.token_index(0, 0, 0).unwrap(), 0);
        assert_eq!(g.token_index(1, 1, 1).unwrap(), 7);
        let g = VideoGrid::new(3, 4, 5);
        assert_eq!(g.token_index(1, 2, 3).unwrap(), 33);
        assert!(g.token_index(3, 0, 0).is_err());
    }

    #[test]
    fn token_index_inverse() {
        let g = VideoGrid::new(3, 4, 5);
        for idx in 0..g.tokens() {
            let (f, h, w) = g.token_coords(idx).unwrap();
            assert_eq!(g.token_index(f, h, w).unwrap(), idx);
        }
        assert!(g.token_coords(g.tokens()).is_err());
    }

    #[test]
    fn uniform_even_split() {
        let plan = uniform_segmentation(21, 3).unwrap();
        assert_eq!(
            plan.intervals,
            vec![
                FrameInterval::new(0, 7),
                FrameInterval::new(7, 14),
                FrameInterval::new(14, 21)
            ]
        );
    }

    #[test]
    fn uniform_remainder_to_front() {
        let plan = uniform_segmentation(10, 3).unwrap();
        assert_eq!(
            plan.intervals,
            vec![
                FrameInterval::new(0, 4),
                FrameInterval::new(4, 7),
                FrameInterval::new(7, 10)
            ]
        );
    }

    #[test]
    fn uniform_singletons() {
        let plan = uniform_segmentation(5, 5).unwrap();
        assert_eq!(plan.intervals.len(), 5);
        assert!(plan.intervals.iter().all(|iv| iv.len() == 1));
        assert!(plan.is_partition_of(5));
    }

    #[test]
    fn uniform_infeasible() {
        assert_eq!(
            uniform_segmentation(4, 5),
            Err(LayoutError::InfeasiblePlan {
                events: 5,
                frames: 4
            })
        );
    }

    #[test]
    fn resolve_keeps_partition() {
        let input = vec![FrameInterval::new(0, 10), FrameInterval::new(10, 20)];
        let plan = resolve_overlaps(&input, 20).unwrap();
        assert_eq!(plan.intervals, input);
    }

    #[test]
    fn resolve_splits_overlap_at_midpoint() {
        let input = vec![FrameInterval::new(0, 12), FrameInterval::new(8, 20)];
        let plan = resolve_overlaps(&input, 20).unwrap();
        assert_eq!(
            plan.intervals,
            vec![FrameInterval::new(0, 10), FrameInterval::new(10, 20)]
        );
    }

    #[test]
    fn resolve_rejects_containment() {
        let input = vec![FrameInterval::new(0, 20), FrameInterval::new(5, 20)];
        assert!(matches!(
            resolve_overlaps(&input, 20),
            Err(LayoutError::InvalidPlan(_))
        ));
    }

    #[test]
    fn resolve_rejects_gap() {
        let input = vec![FrameInterval::new(0, 5), FrameInterval::new(7, 21)];
        assert!(matches!(
            resolve_overlaps(&input, 21),
            Err(LayoutError::InvalidPlan(_))
        ));
    }

    #[test]
    fn token_ranges_contiguous() {
        let grid = VideoGrid::new(4, 2, 2);
        let plan = SegmentationPlan::new(vec![FrameInterval::new(0, 2), FrameInterval::new(2, 4)]);
        assert_eq!(frames_to_token_ranges(&plan, &grid), vec![0..8, 8..16]);

        let grid = VideoGrid::new(3, 1, 1);
        let plan = uniform_segmentation(3, 3).unwrap();
        assert_eq!(frames_to_token_ranges(&plan, &grid), vec![0..1, 1..2, 2..3]);

        let grid = VideoGrid::new(21, 30, 52);
        let plan = SegmentationPlan::new(vec![
            FrameInterval::new(0, 7),
            FrameInterval::new(7, 14),
            FrameInterval::new(14, 21),
        ]);
        assert_eq!(frames_to_token_ranges(&plan, &grid)[1], 10920..21840);
    }

    fn two_event_layout() -> Layout {
        Layout {
            video: VideoGrid::new(4, 2, 2),
            text: TextLayout {
                num_tokens: 10,
                subjects: vec![SubjectSpec {
                    name: "cat".into(),
                    subject_span: Span::new(0, 2),
                    events: vec![
                        EventSpec {
                            span: Span::new(3, 5),
                            frames: FrameInterval::new(0, 2),
                            description: None,
                        },
                        EventSpec {
                            span: Span::new(6, 8),
                            frames: FrameInterval::new(2, 4),
                            description: None,
                        },
                    ],
                }],
            },
            params: ModulationParams::default(),
        }
    }

    #[test]
    fn validate_accepts_well_formed() {
        assert!(validate_layout(&two_event_layout()).is_empty());
    }

    #[test]
    fn validate_flags_span_overlap() {
        let mut layout = two_event_layout();
        layout.text.subjects[0].events[0].span = Span::new(1, 4);
        let diags = validate_layout(&layout);
        assert!(
            diags
                .iter()
                .any(|d| d.message.contains("overlaps subject span")),
            "{diags:?}"
        );
    }

    #[test]
    fn validate_flags_param_order() {
        let mut layout = two_event_layout();
        layout.params.r_min = 2.0;
        layout.params.r_max = 1.0;
        let diags = validate_layout(&layout);
        assert!(
            diags.iter().any(|d| d.message.contains("r_min")),
            "{diags:?}"
        );
    }

    #[test]
    fn layout_json_round_trip_with_defaults() {
        let json = r#"{
            "video": {"frames": 4, "height": 2, "width": 2},
            "text": {"num_tokens": 10,
                     "subjects": [{"name": "cat", "subject_span": [0, 2],
                                   "events": [{"span": [3, 5], "frames": [0, 2]},
                                              {"span": [6, 8], "frames": [2, 4]}]}]}
        }"#;
        let layout = Layout::from_json(json).unwrap();
        assert_eq!(layout.params, ModulationParams::default());
        let back = Layout::from_json(&layout.to_json()).unwrap();
        assert_eq!(layout, back);
    }

    #[test]
    fn params_partial_defaults() {
        let json = r#"{
            "video": {"frames": 2, "height": 1, "width": 1},
            "text": {"num_tokens": 4,
                     "subjects": [{"name": "s", "subject_span": [0, 1],
                                   "events": [{"span": [1, 2], "frames": [0, 1]},
                                              {"span": [2, 3], "frames": [1, 2]}]}]},
            "params": {"apply_fraction": 0.4}
        }"#;
        let layout = Layout::from_json(json).unwrap();
        assert_eq!(layout.params.apply_fraction, 0.4);
        assert_eq!(layout.params.r_max, DEFAULT_R_MAX);
        assert_eq!(layout.params.kernel, DEFAULT_KERNEL);
    }
}
