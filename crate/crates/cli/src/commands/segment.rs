//! `tsa segment`: fill in per-event frame intervals for every subject of a
//! layout skeleton — uniformly, from the user's own intervals, or via the
//! chat-completion planner. Planner fallback still exits 0; the reason goes
//! to stderr.

use tsa_core::layout::{resolve_overlaps, validate_layout};
use tsa_planner::{plan_llm, plan_uniform, PlanMode, PlanSource, PlannerConfig};

use crate::config::Config;
use crate::util::{read_layout, write_atomic};
use crate::{CliError, SegmentArgs};

pub fn run(args: SegmentArgs, config: &Config) -> Result<(), CliError> {
    let mut layout = read_layout(&args.events)?;
    if let Some(frames) = args.frames.or(config.segment.frames) {
        layout.video.frames = frames;
    }
    let frames = layout.video.frames;
    if frames == 0 {
        return Err(CliError::Usage(
            "frame count is zero; set --frames or video.frames in the skeleton".into(),
        ));
    }

    let mode = args
        .mode
        .clone()
        .or_else(|| config.segment.mode.clone())
        .unwrap_or_else(|| "uniform".to_string());

    match mode.as_str() {
        "uniform" => {
            let events: Vec<usize> = layout
                .text
                .subjects
                .iter()
                .map(|s| s.events.len())
                .collect();
            let plans = plan_uniform(&events, frames).map_err(CliError::data)?;
            for (subject, plan) in layout.text.subjects.iter_mut().zip(plans) {
                for (event, interval) in subject.events.iter_mut().zip(plan.intervals) {
                    event.frames = interval;
                }
            }
        }
        "user" => {
            // Intervals come from the skeleton itself; tolerated overlaps are
            // resolved into a partition.
            for subject in &mut layout.text.subjects {
                let intervals: Vec<_> = subject.events.iter().map(|e| e.frames).collect();
                let plan = resolve_overlaps(&intervals, frames)
                    .map_err(|e| CliError::Data(format!("subject '{}': {e}", subject.name)))?;
                for (event, interval) in subject.events.iter_mut().zip(plan.intervals) {
                    event.frames = interval;
                }
            }
        }
        "llm" => {
            let prompt = match (&args.prompt, &args.prompt_file) {
                (Some(text), _) => text.clone(),
                (None, Some(path)) => std::fs::read_to_string(path)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
                (None, None) => {
                    return Err(CliError::Usage(
                        "llm mode requires --prompt or --prompt-file".into(),
                    ))
                }
            };
            let planner_config = build_planner_config(&args, config);
            for si in 0..layout.text.subjects.len() {
                let subject = &layout.text.subjects[si];
                let descriptions: Vec<String> = subject
                    .events
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        e.description.clone().unwrap_or_else(|| {
                            format!("event {i} (text tokens [{},{}))", e.span.start, e.span.end)
                        })
                    })
                    .collect();
                let outcome = plan_llm(&prompt, &descriptions, frames, &planner_config)
                    .map_err(CliError::data)?;
                if let PlanSource::UniformFallback { reason } = &outcome.source {
                    eprintln!(
                        "segment: subject '{}' fell back to the uniform plan ({reason})",
                        subject.name
                    );
                }
                let subject = &mut layout.text.subjects[si];
                for (event, interval) in subject.events.iter_mut().zip(outcome.plan.intervals) {
                    event.frames = interval;
                }
            }
        }
        other => return Err(CliError::Usage(format!("unknown mode '{other}'"))),
    }

    let diags = validate_layout(&layout);
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(CliError::Data(format!(
            "planned layout is invalid: {}",
            list.join("; ")
        )));
    }
    write_atomic(&args.out, layout.to_json().as_bytes())?;
    Ok(())
}

fn build_planner_config(args: &SegmentArgs, config: &Config) -> PlannerConfig {
    let defaults = PlannerConfig::default();
    PlannerConfig {
        mode: PlanMode::Llm,
        endpoint: args
            .endpoint
            .clone()
            .or_else(|| config.segment.endpoint.clone())
            .unwrap_or(defaults.endpoint),
        model: args
            .model
            .clone()
            .or_else(|| config.segment.model.clone())
            .unwrap_or(defaults.model),
        auth_env: config.segment.auth_env.clone().unwrap_or(defaults.auth_env),
        timeout_secs: args
            .timeout
            .or(config.segment.timeout)
            .unwrap_or(defaults.timeout_secs),
        max_retries: config.segment.max_retries.unwrap_or(defaults.max_retries),
    }
}
