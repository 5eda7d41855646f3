//! Ranking and grounding backends: deterministic oracles computed from the
//! clip's own fixations/annotations, and HTTP clients for remote services.
//!
//! The oracles make the full pipeline runnable and testable without any
//! hosted model; the remote clients speak the same JSON contracts as the
//! bundled stub server.

use std::time::Duration;

use serde::Deserialize;

use crate::curation::assign_ranks;
use crate::error::{Error, Result};
use crate::io::frame_png_bytes;
use crate::map::{BoundingBox, Frame, VideoClip};
use crate::pipeline::prompt::{build_prompt, parse_response, PromptMode, VsorResponse};

/// Environment variable naming the remote ranking endpoint.
pub const MLLM_URL_ENV: &str = "SALRANK_MLLM_URL";
/// Environment variable naming the remote grounding endpoint.
pub const GROUND_URL_ENV: &str = "SALRANK_GROUND_URL";
/// Default per-request timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Caption used by the oracle ranker (it does not model language).
pub const ORACLE_CAPTION: &str = "Synthetic clip with ranked salient objects.";

/// Ranks the middle frame's annotated objects by their fixation scores.
pub fn oracle_rank(clip: &VideoClip) -> Result<VsorResponse> {
    let mid = clip.middle_frame();
    let objects = &clip.annotations[mid];
    if objects.is_empty() {
        return Err(Error::IncompleteInput(format!(
            "clip {} has no annotations on frame {mid}",
            clip.id
        )));
    }
    let ranked = assign_ranks(objects, &clip.fixations[mid])?;
    Ok(VsorResponse {
        caption: ORACLE_CAPTION.to_string(),
        ranking: ranked.into_iter().map(|r| r.tag).collect(),
    })
}

/// Looks tags up in an annotation list by exact string match; unmatched tags
/// are omitted, matched tags keep the query order.
pub fn ground_oracle(
    tags: &[String],
    annotations: &[(String, BoundingBox)],
) -> Vec<(String, BoundingBox)> {
    tags.iter()
        .filter_map(|tag| {
            annotations
                .iter()
                .find(|(t, _)| t == tag)
                .map(|(t, b)| (t.clone(), *b))
        })
        .collect()
}

fn post_json(
    agent: &ureq::Agent,
    url: &str,
    body: serde_json::Value,
) -> Result<String> {
    let resp = agent
        .post(url)
        .send_json(body)
        .map_err(|e| Error::Transport(format!("POST {url}: {e}")))?;
    resp.into_string()
        .map_err(|e| Error::Transport(format!("reading response from {url}: {e}")))
}

fn decode_body<T: for<'de> Deserialize<'de>>(text: String) -> Result<T> {
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        message: format!("malformed response body: {e}"),
        raw: text,
    })
}

/// HTTP client for the ranking endpoint:
/// `{"instruction", "frames": [...]}` → `{"text"}`.
pub struct RemoteMllm {
    url: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct MllmReply {
    text: String,
}

impl RemoteMllm {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// Reads the endpoint URL from [`MLLM_URL_ENV`], if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(MLLM_URL_ENV)
            .ok()
            .map(|url| Self::new(url, DEFAULT_TIMEOUT))
    }

    /// Sends the clip's prompt and parses the ranked response.
    pub fn rank(&self, clip: &VideoClip, mode: PromptMode) -> Result<VsorResponse> {
        let prompt = build_prompt(clip, mode);
        let body = serde_json::json!({
            "instruction": prompt.instruction,
            "frames": prompt.frame_refs,
        });
        let reply: MllmReply = decode_body(post_json(&self.agent, &self.url, body)?)?;
        parse_response(&reply.text)
    }
}

/// HTTP client for the grounding endpoint:
/// `{"tags": [...], "frame": <png base64>}` → `{"detections": [...]}`.
pub struct RemoteGrounder {
    url: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Detection {
    tag: String,
    #[serde(rename = "box")]
    bbox: BoundingBox,
    #[allow(dead_code)]
    score: f64,
}

#[derive(Deserialize)]
struct GroundReply {
    detections: Vec<Detection>,
}

impl RemoteGrounder {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// Reads the endpoint URL from [`GROUND_URL_ENV`], if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(GROUND_URL_ENV)
            .ok()
            .map(|url| Self::new(url, DEFAULT_TIMEOUT))
    }

    /// Localizes tags on one frame; unmatched tags are omitted.
    pub fn ground(&self, tags: &[String], frame: &Frame) -> Result<Vec<(String, BoundingBox)>> {
        use base64::Engine as _;
        if tags.is_empty() {
            return Err(Error::EmptyInput("no tags to ground".into()));
        }
        let png = frame_png_bytes(frame)?;
        let body = serde_json::json!({
            "tags": tags,
            "frame": base64::engine::general_purpose::STANDARD.encode(png),
        });
        let reply: GroundReply = decode_body(post_json(&self.agent, &self.url, body)?)?;
        Ok(tags
            .iter()
            .filter_map(|tag| {
                reply
                    .detections
                    .iter()
                    .find(|d| &d.tag == tag)
                    .map(|d| (tag.clone(), d.bbox))
            })
            .collect())
    }
}
