//! Inference orchestration: prompts, ranking/grounding backends, the
//! bundled stub server, and per-clip saliency decoding.

pub mod client;
pub mod predict;
pub mod prompt;
pub mod stub;

pub use client::{oracle_rank, RemoteGrounder, RemoteMllm};
pub use predict::{predict_clip, ClipPrediction, Provenance, RankSource};
pub use prompt::{build_prompt, parse_response, PromptMode, VsorPrompt, VsorResponse};
pub use stub::{StubConfig, StubServer};
