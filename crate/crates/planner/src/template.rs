//! The prompt template sent to the chat-completion endpoint. Versioned here
//! so planning runs are auditable: the request contract is "prompt, events,
//! and frame count in; strict JSON intervals out".

/// Render the planning request for one subject's event list.
pub fn segmentation_prompt(prompt: &str, events: &[String], frames: usize) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "You plan the timeline of a generated video with {frames} latent frames \
         (frame indices 0 to {}).\n\n",
        frames.saturating_sub(1)
    ));
    out.push_str(&format!("Video prompt:\n{prompt}\n\n"));
    out.push_str(&format!(
        "The prompt contains {} sequential events:\n",
        events.len()
    ));
    for (i, event) in events.iter().enumerate() {
        out.push_str(&format!("{i}. {event}\n"));
    }
    out.push_str(&format!(
        "\nAssign each event one half-open frame interval [start, end) with \
         0 <= start < end <= {frames}. Intervals must follow the temporal order of \
         the events and together cover the whole video from frame 0 to frame {frames}; \
         a slight overlap at transitions is acceptable.\n\
         Reply with strict JSON only, no prose, in exactly this form:\n\
         {{\"segments\": [{{\"event\": 0, \"frames\": [start, end]}}, ...]}}\n"
    ));
    out
}
