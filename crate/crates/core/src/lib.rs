//! Event-aware cross-attention modulation for multi-event video generation,
//! at desk scale.
//!
//! The pipeline: extract a motion-region mask from the subject's semantic
//! layout ([`motion`]), split video queries temporally per event
//! ([`layout`]), then bias and reinforce the attention logits so each
//! segment's motion tokens bind to their own event ([`modulation`]). The
//! [`harness`] module generates synthetic instances and measures the
//! alignment effect over a mock denoising schedule.

pub mod harness;
pub mod io;
pub mod layout;
pub mod modulation;
pub mod motion;
pub mod pgm;
pub mod tensor;
pub mod viz;

pub use layout::{Layout, ModulationParams, SegmentationPlan, Span, VideoGrid};
pub use modulation::SubjectModulation;
pub use motion::MotionMask;
pub use tensor::Tensor2;
