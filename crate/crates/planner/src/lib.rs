//! Segmentation planning: turn a prompt's event list into per-event frame
//! intervals. Three modes: uniform splitting, user-supplied intervals, and
//! an external chat-completion API. The LLM route never returns an invalid
//! plan — any transport or parse failure falls back to the uniform split
//! with the reason recorded.

use thiserror::Error;

use tsa_core::layout::{
    resolve_overlaps, uniform_segmentation, FrameInterval, LayoutError, SegmentationPlan,
};

pub mod client;
pub mod template;

pub use client::{parse_segments, SegmentEntry, SegmentsReply};
pub use template::segmentation_prompt;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("planner config: {0}")]
    BadConfig(String),
}

/// How a plan is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    Uniform,
    User,
    Llm,
}

/// Client configuration for the LLM mode. The auth token is read from the
/// environment variable named by `auth_env` and never stored in files.
#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub mode: PlanMode,
    pub endpoint: String,
    pub model: String,
    pub auth_env: String,
    pub timeout_secs: f64,
    pub max_retries: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mode: PlanMode::Uniform,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            auth_env: "OPENAI_API_KEY".into(),
            timeout_secs: 10.0,
            max_retries: 1,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.timeout_secs > 0.0) {
            return Err(PlannerError::BadConfig(format!(
                "timeout {} must be > 0",
                self.timeout_secs
            )));
        }
        if self.mode == PlanMode::Llm && (self.endpoint.is_empty() || self.model.is_empty()) {
            return Err(PlannerError::BadConfig(
                "llm mode requires an endpoint and a model".into(),
            ));
        }
        Ok(())
    }

    pub fn auth_token(&self) -> Option<String> {
        std::env::var(&self.auth_env).ok().filter(|t| !t.is_empty())
    }
}

/// Why an LLM plan was abandoned in favor of the uniform fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FallbackReason {
    Timeout,
    Network(String),
    HttpStatus(u16),
    ParseFailure(String),
    EventCountMismatch { expected: usize, found: usize },
    InvalidIntervals(String),
    InvalidPlan(String),
}

impl std::fmt::Display for FallbackReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FallbackReason::Timeout => write!(f, "timeout"),
            FallbackReason::Network(e) => write!(f, "network: {e}"),
            FallbackReason::HttpStatus(code) => write!(f, "http-status: {code}"),
            FallbackReason::ParseFailure(e) => write!(f, "parse-failure: {e}"),
            FallbackReason::EventCountMismatch { expected, found } => {
                write!(
                    f,
                    "event-count-mismatch: expected {expected}, found {found}"
                )
            }
            FallbackReason::InvalidIntervals(e) => write!(f, "invalid-intervals: {e}"),
            FallbackReason::InvalidPlan(e) => write!(f, "invalid-plan: {e}"),
        }
    }
}

/// Where a returned plan came from: a parsed LLM reply (raw text retained
/// for audit) or the uniform fallback with its reason.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanSource {
    Uniform,
    User,
    Llm { raw: String },
    UniformFallback { reason: FallbackReason },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSegmentation {
    pub plan: SegmentationPlan,
    pub source: PlanSource,
}

/// Uniform plans for several subjects, one per entry of `events_per_subject`.
pub fn plan_uniform(
    events_per_subject: &[usize],
    frames: usize,
) -> Result<Vec<SegmentationPlan>, PlannerError> {
    events_per_subject
        .iter()
        .map(|&events| uniform_segmentation(frames, events).map_err(PlannerError::from))
        .collect()
}

/// Plan one subject's events over `frames` via the chat-completion API.
/// Sends a single request per attempt (1 + `max_retries` attempts). Any
/// failure — transport, parse, wrong event count, bad intervals, an
/// unresolvable plan — falls back to [`plan_uniform`] with the reason
/// recorded in the returned [`PlanSource`].
pub fn plan_llm(
    prompt: &str,
    events: &[String],
    frames: usize,
    config: &PlannerConfig,
) -> Result<PlannedSegmentation, PlannerError> {
    config.validate()?;
    // The fallback must be feasible before any network work happens.
    let fallback_plan = uniform_segmentation(frames, events.len())?;

    let message = template::segmentation_prompt(prompt, events, frames);
    let mut last_reason = FallbackReason::Network("no attempt made".into());
    for _attempt in 0..=config.max_retries {
        match attempt_llm_plan(&message, events.len(), frames, config) {
            Ok((plan, raw)) => {
                return Ok(PlannedSegmentation {
                    plan,
                    source: PlanSource::Llm { raw },
                });
            }
            Err(reason) => last_reason = reason,
        }
    }
    Ok(PlannedSegmentation {
        plan: fallback_plan,
        source: PlanSource::UniformFallback {
            reason: last_reason,
        },
    })
}

fn attempt_llm_plan(
    message: &str,
    event_count: usize,
    frames: usize,
    config: &PlannerConfig,
) -> Result<(SegmentationPlan, String), FallbackReason> {
    let content = client::request_completion(config, message)?;
    let reply = client::parse_segments(&content)?;
    let plan = reply_to_plan(&reply, event_count, frames)?;
    Ok((plan, content))
}

/// Validate and normalize a parsed reply: exactly one interval per event
/// index, frames clamped to `[0, frames]`, overlaps resolved to a partition.
pub fn reply_to_plan(
    reply: &SegmentsReply,
    event_count: usize,
    frames: usize,
) -> Result<SegmentationPlan, FallbackReason> {
    if reply.segments.len() != event_count {
        return Err(FallbackReason::EventCountMismatch {
            expected: event_count,
            found: reply.segments.len(),
        });
    }
    let mut intervals = vec![None; event_count];
    for entry in &reply.segments {
        let idx = usize::try_from(entry.event).map_err(|_| {
            FallbackReason::InvalidIntervals(format!("negative event index {}", entry.event))
        })?;
        let slot = intervals
            .get_mut(idx)
            .ok_or(FallbackReason::EventCountMismatch {
                expected: event_count,
                found: reply.segments.len(),
            })?;
        if slot.is_some() {
            return Err(FallbackReason::InvalidIntervals(format!(
                "event {idx} assigned twice"
            )));
        }
        let clamp = |v: i64| -> usize { v.clamp(0, frames as i64) as usize };
        let (start, end) = (clamp(entry.frames[0]), clamp(entry.frames[1]));
        if start >= end {
            return Err(FallbackReason::InvalidIntervals(format!(
                "event {idx} interval [{start},{end}) is empty after clamping"
            )));
        }
        *slot = Some(FrameInterval::new(start, end));
    }
    let intervals: Vec<FrameInterval> = intervals.into_iter().map(|iv| iv.unwrap()).collect();
    resolve_overlaps(&intervals, frames).map_err(|e| FallbackReason::InvalidPlan(e.to_string()))
}

/// One problem found by [`validate_plan`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanDiagnostic(pub String);

impl std::fmt::Display for PlanDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Check a plan against its layout slot: interval count, frame bounds, and
/// the partition property. Returns every violation instead of aborting.
pub fn validate_plan(
    plan: &SegmentationPlan,
    expected_events: usize,
    frames: usize,
) -> Vec<PlanDiagnostic> {
    let mut diags = Vec::new();
    if plan.intervals.len() != expected_events {
        diags.push(PlanDiagnostic(format!(
            "plan has {} intervals for {} events",
            plan.intervals.len(),
            expected_events
        )));
    }
    for (i, iv) in plan.intervals.iter().enumerate() {
        if iv.is_empty() || iv.end > frames {
            diags.push(PlanDiagnostic(format!(
                "interval {i} [{},{}) is empty or exceeds {frames} frames",
                iv.start, iv.end
            )));
        }
    }
    let mut cursor = 0;
    for (i, iv) in plan.intervals.iter().enumerate() {
        if iv.start > cursor {
            diags.push(PlanDiagnostic(format!(
                "coverage gap before interval {i}: frames [{cursor},{})",
                iv.start
            )));
        } else if iv.start < cursor {
            diags.push(PlanDiagnostic(format!(
                "interval {i} overlaps the previous one at frame {}",
                iv.start
            )));
        }
        cursor = cursor.max(iv.end);
    }
    if cursor != frames {
        diags.push(PlanDiagnostic(format!(
            "plan covers frames [0,{cursor}) instead of [0,{frames})"
        )));
    }
    diags
}
