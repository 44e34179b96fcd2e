//! Blocking chat-completion client. One request per call, OpenAI-compatible
//! wire shape, temperature 0. The reply must be strict JSON of the form
//! `{"segments": [{"event": i, "frames": [f0, f1]}, ...]}`; a lenient
//! extractor also accepts the first `{...}` block inside a prose reply.

use serde::{Deserialize, Serialize};

use crate::{FallbackReason, PlannerConfig};

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f32,
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

/// The parsed reply body.
#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct SegmentsReply {
    pub segments: Vec<SegmentEntry>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct SegmentEntry {
    pub event: i64,
    pub frames: [i64; 2],
}

/// Send one planning request and return the assistant's text content plus
/// the raw response body for auditing.
pub fn request_completion(
    config: &PlannerConfig,
    user_message: &str,
) -> Result<String, FallbackReason> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(std::time::Duration::from_secs_f64(
            config.timeout_secs,
        )))
        .build()
        .into();

    let body = ChatRequest {
        model: &config.model,
        messages: vec![ChatMessage {
            role: "user",
            content: user_message,
        }],
        temperature: 0.0,
    };

    let mut request = agent.post(&config.endpoint);
    if let Some(token) = config.auth_token() {
        request = request.header("authorization", &format!("Bearer {token}"));
    }

    let mut response = request.send_json(&body).map_err(classify_transport)?;
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| FallbackReason::Network(e.to_string()))?;

    let parsed: ChatResponse = serde_json::from_str(&text)
        .map_err(|e| FallbackReason::ParseFailure(format!("response envelope: {e}")))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| FallbackReason::ParseFailure("response has no choices".into()))?;
    Ok(choice.message.content)
}

fn classify_transport(err: ureq::Error) -> FallbackReason {
    match err {
        ureq::Error::Timeout(_) => FallbackReason::Timeout,
        ureq::Error::StatusCode(code) => FallbackReason::HttpStatus(code),
        other => FallbackReason::Network(other.to_string()),
    }
}

/// Parse the assistant content into a [`SegmentsReply`]. Strict JSON first;
/// otherwise the first balanced `{...}` block is tried before giving up.
pub fn parse_segments(content: &str) -> Result<SegmentsReply, FallbackReason> {
    if let Ok(reply) = serde_json::from_str::<SegmentsReply>(content.trim()) {
        return Ok(reply);
    }
    if let Some(block) = first_json_block(content) {
        if let Ok(reply) = serde_json::from_str::<SegmentsReply>(block) {
            return Ok(reply);
        }
    }
    Err(FallbackReason::ParseFailure(
        "no parsable segments JSON in reply".into(),
    ))
}

/// First balanced `{...}` substring, string-literal aware.
fn first_json_block(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}
