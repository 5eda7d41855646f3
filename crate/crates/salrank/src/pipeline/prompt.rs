//! Prompt construction and response parsing for the ranking model.
//!
//! The chain-of-thought contract is caption-then-rank: the instruction asks
//! for a one-sentence caption first and the numbered ranking list second.
//! Responses are parsed with a small line grammar — the ranking block is the
//! first maximal run of `N. <tag>` lines; everything before it is the
//! caption, and trailing prose after the block is tolerated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::VideoClip;

/// How the model is asked for the ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    /// Caption first, then the ranking list.
    Cot,
    /// Ranking list only.
    Direct,
}

/// Instruction plus frame references sent to the ranking model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VsorPrompt {
    pub instruction: String,
    pub frame_refs: Vec<String>,
}

/// Parsed model output. A valid response has a non-empty, duplicate-free
/// ranking and a caption that contains no `N. <tag>` lines of its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VsorResponse {
    pub caption: String,
    /// Object tags, rank 1 first.
    pub ranking: Vec<String>,
}

/// Builds the instruction and frame references for a clip.
pub fn build_prompt(clip: &VideoClip, mode: PromptMode) -> VsorPrompt {
    let instruction = match mode {
        PromptMode::Cot => concat!(
            "Watch the video frames. First write a one-sentence caption ",
            "describing the video. Then list the salient objects ranked from ",
            "most to least salient, one per line, in the form `1. <tag>`."
        ),
        PromptMode::Direct => concat!(
            "Watch the video frames. List the salient objects ranked from ",
            "most to least salient, one per line, in the form `1. <tag>`."
        ),
    };
    VsorPrompt {
        instruction: instruction.to_string(),
        frame_refs: (0..clip.len())
            .map(|i| format!("{}/f{i:03}", clip.id))
            .collect(),
    }
}

/// Returns the tag when `line` has the shape `N. <tag>` (or `N) <tag>`).
fn numbered_tag(line: &str) -> Option<&str> {
    let trimmed = line.trim_start();
    let digits = trimmed.len() - trimmed.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    let rest = &trimmed[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    let tag = rest.trim();
    (!tag.is_empty()).then_some(tag)
}

/// Extracts the caption and ranking list from raw model text.
pub fn parse_response(text: &str) -> Result<VsorResponse> {
    let mut caption_lines: Vec<&str> = Vec::new();
    let mut ranking: Vec<String> = Vec::new();
    let mut in_block = false;
    for line in text.lines() {
        match numbered_tag(line) {
            Some(tag) => {
                in_block = true;
                if !ranking.iter().any(|t| t == tag) {
                    ranking.push(tag.to_string());
                }
            }
            None if in_block => break, // trailing prose after the block
            None => caption_lines.push(line),
        }
    }
    if ranking.is_empty() {
        return Err(Error::Parse {
            message: "no numbered ranking block found".into(),
            raw: text.to_string(),
        });
    }
    Ok(VsorResponse {
        caption: caption_lines.join("\n").trim().to_string(),
        ranking,
    })
}

/// Renders a response in parse-normal form: caption, then `N. <tag>` lines.
pub fn serialize(resp: &VsorResponse) -> String {
    let mut out = String::new();
    if !resp.caption.is_empty() {
        out.push_str(&resp.caption);
        out.push('\n');
    }
    for (i, tag) in resp.ranking.iter().enumerate() {
        out.push_str(&format!("{}. {tag}\n", i + 1));
    }
    out
}
