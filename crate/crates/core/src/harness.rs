//! Synthetic-input generation, multi-head and schedule orchestration, and
//! alignment metrics.
//!
//! The simulation is a mock loop: no latents are denoised. Each step draws
//! fresh query noise from a seeded stream, computes vanilla attention per
//! head, and — while the schedule gate is open — the modulated attention,
//! recording how much probability mass each temporal segment places on its
//! aligned event, on other events, and on context tokens.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{
    uniform_segmentation, EventSpec, HeadMaskPolicy, Layout, ModulationParams, Span, SubjectSpec,
    TextLayout, VideoGrid,
};
use crate::modulation::{
    modulated_attention_multi, subject_artifacts_from_logits, ModulationError, ModulationTerm,
    SubjectModulation,
};
use crate::motion::{
    adaptive_threshold, erode_mask, motion_mask_from_logits, semantic_map_from_logits, MotionError,
    SemanticMap,
};
use crate::tensor::{matmul_qk, row_softmax, Tensor2};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
    #[error(transparent)]
    Layout(#[from] crate::layout::LayoutError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

/// Parameters of the synthetic attention instance. Keys of each event's text
/// columns are drawn around a per-event direction; queries of the matching
/// temporal segment lean toward that direction with strength `alpha` under
/// noise `sigma`. A central foreground block of every frame additionally
/// responds to the subject tokens with strength `subject_strength`, which is
/// what the motion mask picks up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub grid: VideoGrid,
    pub text_tokens: usize,
    pub dim: usize,
    pub heads: usize,
    pub events: usize,
    pub alpha: f32,
    pub sigma: f32,
    pub subject_strength: f32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: VideoGrid::new(6, 8, 8),
            text_tokens: 16,
            dim: 16,
            heads: 2,
            events: 3,
            alpha: 0.5,
            sigma: 1.0,
            subject_strength: 2.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.grid.frames == 0 || self.grid.height == 0 || self.grid.width == 0 {
            return Err(HarnessError::BadSpec("grid dimensions must be >= 1".into()));
        }
        if self.heads == 0 {
            return Err(HarnessError::BadSpec("heads must be >= 1".into()));
        }
        if self.events == 0 || self.events > self.grid.frames {
            return Err(HarnessError::BadSpec(format!(
                "{} events cannot be laid out over {} frames",
                self.events, self.grid.frames
            )));
        }
        if self.text_tokens < self.events + 2 {
            return Err(HarnessError::BadSpec(format!(
                "{} text tokens are too few for {} events, a subject, and context",
                self.text_tokens, self.events
            )));
        }
        if self.dim == 0 {
            return Err(HarnessError::BadSpec("dim must be >= 1".into()));
        }
        if self.alpha < 0.0 || self.sigma < 0.0 || self.subject_strength < 0.0 {
            return Err(HarnessError::BadSpec(
                "strengths must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Denoising-schedule stand-in: how many steps, and which leading fraction
/// of them applies the modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    total_steps: usize,
    apply_fraction: f64,
}

impl ScheduleSpec {
    pub fn new(total_steps: usize, apply_fraction: f64) -> Result<Self, HarnessError> {
        if total_steps == 0 {
            return Err(HarnessError::BadSpec("total_steps must be >= 1".into()));
        }
        if !(apply_fraction > 0.0 && apply_fraction <= 1.0) {
            return Err(HarnessError::BadSpec(format!(
                "apply_fraction {apply_fraction} must be in (0,1]"
            )));
        }
        Ok(Self {
            total_steps,
            apply_fraction,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn apply_fraction(&self) -> f64 {
        self.apply_fraction
    }

    /// Number of leading steps with the gate open:
    /// `ceil(apply_fraction · total_steps)`.
    pub fn active_steps(&self) -> usize {
        let raw = self.apply_fraction * self.total_steps as f64;
        // Guard against float dust pushing an exact product over the ceiling.
        ((raw - 1e-9).ceil() as usize).min(self.total_steps)
    }
}

/// True iff the modulation replaces vanilla attention at `step`.
pub fn schedule_gate(step: usize, schedule: &ScheduleSpec) -> bool {
    step < schedule.active_steps()
}

struct HeadDirections {
    subject: Vec<f32>,
    events: Vec<Vec<f32>>,
    /// One direction per context column, keyed by column index.
    context: Vec<(usize, Vec<f32>)>,
}

fn mix_seed(seed: u64, head: u64, salt: u64) -> u64 {
    // splitmix64 over the combined stream id
    let mut z =
        seed ^ head.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    let mut v = normal_vec(rng, len);
    let norm = v
        .iter()
        .map(|x| f64::from(*x) * f64::from(*x))
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    for x in &mut v {
        *x = (f64::from(*x) / norm) as f32;
    }
    v
}

/// Text-side layout of the synthetic instance: subject at token 0, one span
/// per event, trailing context tokens.
pub fn synth_layout(spec: &SynthSpec, params: ModulationParams) -> Layout {
    let m = spec.text_tokens;
    let width = (m - 2) / spec.events;
    let plan = uniform_segmentation(spec.grid.frames, spec.events).expect("validated spec");
    let events = (0..spec.events)
        .map(|i| EventSpec {
            span: Span::new(1 + i * width, 1 + (i + 1) * width),
            frames: plan.intervals[i],
            description: Some(format!("event {i}")),
        })
        .collect();
    Layout {
        video: spec.grid,
        text: TextLayout {
            num_tokens: m,
            subjects: vec![SubjectSpec {
                name: "subject".into(),
                subject_span: Span::new(0, 1),
                events,
            }],
        },
        params,
    }
}

fn head_directions(spec: &SynthSpec, layout: &Layout, head: usize) -> HeadDirections {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, head as u64, u64::MAX));
    let subject = unit_vec(&mut rng, spec.dim);
    let events = (0..spec.events)
        .map(|_| unit_vec(&mut rng, spec.dim))
        .collect();
    let subj = &layout.text.subjects[0];
    let context = (0..spec.text_tokens)
        .filter(|&y| {
            !subj.subject_span.contains(y) && !subj.events.iter().any(|e| e.span.contains(y))
        })
        .map(|y| (y, unit_vec(&mut rng, spec.dim)))
        .collect();
    HeadDirections {
        subject,
        events,
        context,
    }
}

fn synth_keys(spec: &SynthSpec, layout: &Layout, dirs: &HeadDirections, head: usize) -> Tensor2 {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, head as u64, u64::MAX - 1));
    let scale = 0.5 * (spec.dim as f64).sqrt() as f32;
    let subj = &layout.text.subjects[0];
    let mut data = Vec::with_capacity(spec.text_tokens * spec.dim);
    for y in 0..spec.text_tokens {
        let dir: &[f32] = if subj.subject_span.contains(y) {
            &dirs.subject
        } else if let Some(e) = subj.events.iter().position(|e| e.span.contains(y)) {
            &dirs.events[e]
        } else {
            &dirs
                .context
                .iter()
                .find(|(col, _)| *col == y)
                .expect("context column")
                .1
        };
        let noise = normal_vec(&mut rng, spec.dim);
        for i in 0..spec.dim {
            data.push(scale * dir[i] + 0.5 * noise[i]);
        }
    }
    Tensor2::new(spec.text_tokens, spec.dim, data).expect("sized by construction")
}

/// True for tokens in the central foreground block of each frame (the
/// quarter-margin box), which carry the subject response.
fn foreground(grid: &VideoGrid, h: usize, w: usize) -> bool {
    let (mh, mw) = (grid.height / 4, grid.width / 4);
    h >= mh && h < grid.height - mh && w >= mw && w < grid.width - mw
}

fn synth_queries(
    spec: &SynthSpec,
    layout: &Layout,
    dirs: &HeadDirections,
    head: usize,
    step: usize,
) -> Tensor2 {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, head as u64, step as u64));
    let scale = 0.5 * (spec.dim as f64).sqrt() as f32;
    let grid = &spec.grid;
    let subj = &layout.text.subjects[0];
    let mut data = Vec::with_capacity(grid.tokens() * spec.dim);
    for f in 0..grid.frames {
        let segment = subj
            .events
            .iter()
            .position(|e| f >= e.frames.start && f < e.frames.end)
            .expect("plan partitions frames");
        let event_dir = &dirs.events[segment];
        for h in 0..grid.height {
            for w in 0..grid.width {
                let fg = if foreground(grid, h, w) {
                    spec.subject_strength
                } else {
                    0.0
                };
                let noise = normal_vec(&mut rng, spec.dim);
                for i in 0..spec.dim {
                    data.push(
                        scale * (spec.alpha * event_dir[i] + fg * dirs.subject[i])
                            + spec.sigma * noise[i],
                    );
                }
            }
        }
    }
    Tensor2::new(grid.tokens(), spec.dim, data).expect("sized by construction")
}

/// One head's query/key pair.
#[derive(Debug, Clone)]
pub struct HeadTensors {
    pub q: Tensor2,
    pub k: Tensor2,
}

/// Deterministic synthetic instance: per-head tensors plus the layout.
#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub heads: Vec<HeadTensors>,
    pub layout: Layout,
}

/// Generate the step-0 tensors for every head. Identical specs produce
/// identical tensors.
pub fn synth_inputs(spec: &SynthSpec) -> Result<SynthInstance, HarnessError> {
    synth_inputs_at_step(spec, 0)
}

fn synth_inputs_at_step(spec: &SynthSpec, step: usize) -> Result<SynthInstance, HarnessError> {
    spec.validate()?;
    let layout = synth_layout(spec, ModulationParams::default());
    let heads = (0..spec.heads)
        .map(|head| {
            let dirs = head_directions(spec, &layout, head);
            HeadTensors {
                q: synth_queries(spec, &layout, &dirs, head, step),
                k: synth_keys(spec, &layout, &dirs, head),
            }
        })
        .collect();
    Ok(SynthInstance { heads, layout })
}

/// Attention-mass triple for one segment, averaged over its masked tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassTriple {
    pub aligned: f64,
    pub other: f64,
    pub context: f64,
}

/// Per-segment (aligned, other-events, context) attention mass, averaged
/// over the segment's masked tokens. Segments with no masked tokens report
/// `None`.
pub fn alignment_score(
    attention: &Tensor2,
    subject: &SubjectModulation,
) -> Vec<Option<MassTriple>> {
    let spans = &subject.event_spans;
    subject
        .token_ranges
        .iter()
        .enumerate()
        .map(|(i, range)| {
            let mut count = 0usize;
            let mut sums = MassTriple {
                aligned: 0.0,
                other: 0.0,
                context: 0.0,
            };
            for x in range.clone() {
                if subject.mask[x] == 0 {
                    continue;
                }
                count += 1;
                let row = attention.row(x);
                for (y, &p) in row.iter().enumerate() {
                    let p = f64::from(p);
                    match spans.iter().position(|s| s.contains(y)) {
                        Some(j) if j == i => sums.aligned += p,
                        Some(_) => sums.other += p,
                        None => sums.context += p,
                    }
                }
            }
            (count > 0).then(|| MassTriple {
                aligned: sums.aligned / count as f64,
                other: sums.other / count as f64,
                context: sums.context / count as f64,
            })
        })
        .collect()
}

/// Which head a metrics row belongs to; `Averaged` rows carry the mean over
/// heads with defined values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadSlot {
    Index(usize),
    Averaged,
}

impl std::fmt::Display for HeadSlot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HeadSlot::Index(i) => write!(f, "{i}"),
            HeadSlot::Averaged => write!(f, "avg"),
        }
    }
}

/// One metrics row of the simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub step: usize,
    pub head: HeadSlot,
    pub segment: usize,
    pub gated: bool,
    pub vanilla: Option<MassTriple>,
    pub modulated: Option<MassTriple>,
}

/// Metrics table emitted by [`run_sim`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub rows: Vec<SimRow>,
}

pub const SIM_CSV_HEADER: &str = "step,head,segment,gated,aligned_mass_vanilla,aligned_mass_mod,\
other_mass_vanilla,other_mass_mod,context_mass_vanilla,context_mass_mod";

impl SimReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SIM_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let fmt = |t: &Option<MassTriple>, pick: fn(&MassTriple) -> f64| match t {
                Some(t) => format!("{:.9}", pick(t)),
                None => "nan".to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                row.step,
                row.head,
                row.segment,
                u8::from(row.gated),
                fmt(&row.vanilla, |t| t.aligned),
                fmt(&row.modulated, |t| t.aligned),
                fmt(&row.vanilla, |t| t.other),
                fmt(&row.modulated, |t| t.other),
                fmt(&row.vanilla, |t| t.context),
                fmt(&row.modulated, |t| t.context),
            ));
        }
        out
    }
}

struct HeadStepMetrics {
    vanilla: Vec<Option<MassTriple>>,
    modulated: Vec<Option<MassTriple>>,
}

/// Pure per-(step, head) computation; results do not depend on scheduling
/// order across heads.
fn head_step_metrics(
    q: &Tensor2,
    k: &Tensor2,
    layout: &Layout,
    params: &ModulationParams,
    gated: bool,
    shared_mask: Option<&[u8]>,
) -> Result<HeadStepMetrics, HarnessError> {
    let grid = layout.video;
    let logits = matmul_qk(q, k)?;
    let subject_span = layout.text.subjects[0].subject_span;
    let mask = match shared_mask {
        Some(bits) => bits.to_vec(),
        None => motion_mask_from_logits(&logits, q.cols(), subject_span, grid, params.kernel)?
            .bits()
            .to_vec(),
    };
    let subject = SubjectModulation::from_layout(layout, 0, mask)?;

    let scaled = logits.map(|v| v / (q.cols() as f64).sqrt() as f32);
    let vanilla_attn = row_softmax(&scaled);
    let vanilla = alignment_score(&vanilla_attn, &subject);

    let modulated = if gated {
        let (bias, reinforcement) =
            subject_artifacts_from_logits(&logits, q.cols(), &subject, params)?;
        let attn = modulated_attention_multi(
            q,
            k,
            &[ModulationTerm {
                mask: &subject.mask,
                bias: &bias,
                reinforcement: &reinforcement,
            }],
        )?;
        alignment_score(&attn, &subject)
    } else {
        vanilla.clone()
    };
    Ok(HeadStepMetrics { vanilla, modulated })
}

fn average_triples(slots: &[Option<MassTriple>]) -> Option<MassTriple> {
    let defined: Vec<&MassTriple> = slots.iter().flatten().collect();
    if defined.is_empty() {
        return None;
    }
    let n = defined.len() as f64;
    Some(MassTriple {
        aligned: defined.iter().map(|t| t.aligned).sum::<f64>() / n,
        other: defined.iter().map(|t| t.other).sum::<f64>() / n,
        context: defined.iter().map(|t| t.context).sum::<f64>() / n,
    })
}

/// Run the mock denoising loop. Heads are processed in parallel within each
/// step; rows come out in (step, head, segment) order with an extra
/// head-averaged row block per step. Output is deterministic for a given
/// spec.
pub fn run_sim(
    spec: &SynthSpec,
    schedule: &ScheduleSpec,
    params: &ModulationParams,
) -> Result<SimReport, HarnessError> {
    spec.validate()?;
    let layout = synth_layout(spec, *params);
    let per_head: Vec<(HeadDirections, Tensor2)> = (0..spec.heads)
        .map(|head| {
            let dirs = head_directions(spec, &layout, head);
            let k = synth_keys(spec, &layout, &dirs, head);
            (dirs, k)
        })
        .collect();

    let mut rows = Vec::new();
    for step in 0..schedule.total_steps() {
        let gated = schedule_gate(step, schedule);
        let queries: Vec<Tensor2> = (0..spec.heads)
            .map(|head| synth_queries(spec, &layout, &per_head[head].0, head, step))
            .collect();

        // Under the head-averaged policy, one mask is shared by all heads.
        let shared_mask: Option<Vec<u8>> = match params.head_mask_policy {
            HeadMaskPolicy::PerHead => None,
            HeadMaskPolicy::HeadAveraged => {
                let span = layout.text.subjects[0].subject_span;
                let mut sums = vec![0.0f64; spec.grid.tokens()];
                for head in 0..spec.heads {
                    let logits = matmul_qk(&queries[head], &per_head[head].1)?;
                    let map = semantic_map_from_logits(&logits, spec.dim, span, spec.grid);
                    for (s, v) in sums.iter_mut().zip(&map.values) {
                        *s += f64::from(*v);
                    }
                }
                let values: Vec<f32> = sums
                    .iter()
                    .map(|s| (s / spec.heads as f64) as f32)
                    .collect();
                let map = SemanticMap {
                    values,
                    grid: spec.grid,
                };
                Some(
                    erode_mask(&adaptive_threshold(&map), spec.grid, params.kernel)?
                        .bits()
                        .to_vec(),
                )
            }
        };

        let metrics: Vec<HeadStepMetrics> = (0..spec.heads)
            .into_par_iter()
            .map(|head| {
                head_step_metrics(
                    &queries[head],
                    &per_head[head].1,
                    &layout,
                    params,
                    gated,
                    shared_mask.as_deref(),
                )
            })
            .collect::<Result<_, _>>()?;

        for (head, m) in metrics.iter().enumerate() {
            for segment in 0..spec.events {
                rows.push(SimRow {
                    step,
                    head: HeadSlot::Index(head),
                    segment,
                    gated,
                    vanilla: m.vanilla[segment],
                    modulated: m.modulated[segment],
                });
            }
        }
        for segment in 0..spec.events {
            let vanilla: Vec<Option<MassTriple>> =
                metrics.iter().map(|m| m.vanilla[segment]).collect();
            let modulated: Vec<Option<MassTriple>> =
                metrics.iter().map(|m| m.modulated[segment]).collect();
            rows.push(SimRow {
                step,
                head: HeadSlot::Averaged,
                segment,
                gated,
                vanilla: average_triples(&vanilla),
                modulated: average_triples(&modulated),
            });
        }
    }
    Ok(SimReport { rows })
}
