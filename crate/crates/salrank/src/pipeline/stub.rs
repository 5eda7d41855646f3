//! In-repo stub server for the two remote endpoints, used by integration
//! tests and runnable standalone via the CLI.
//!
//! The stub replies with configured content: a fixed text for the ranking
//! endpoint and a fixed detection list for the grounding endpoint. Defaults
//! line up with the synthetic dataset's tags, so the whole remote pipeline
//! can run against the stub out of the box.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::BoundingBox;

/// One configured grounding detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubDetection {
    pub tag: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Configured responses for both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubConfig {
    /// Raw text returned by the ranking endpoint.
    pub mllm_text: String,
    /// Detections returned by the grounding endpoint.
    pub detections: Vec<StubDetection>,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            mllm_text: "Colored disks drift over a noisy background.\n\
                        1. disk0\n2. disk1\n3. disk2"
                .to_string(),
            detections: vec![
                StubDetection {
                    tag: "disk0".into(),
                    bbox: BoundingBox::new(2, 2, 10, 10).unwrap(),
                    score: 0.9,
                },
                StubDetection {
                    tag: "disk1".into(),
                    bbox: BoundingBox::new(12, 4, 20, 12).unwrap(),
                    score: 0.8,
                },
                StubDetection {
                    tag: "disk2".into(),
                    bbox: BoundingBox::new(22, 8, 30, 16).unwrap(),
                    score: 0.7,
                },
            ],
        }
    }
}

impl StubConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn json_response(body: String, status: u32) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(
            tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                .expect("static header"),
        )
}

fn handle(request: tiny_http::Request, config: &StubConfig) {
    let mut request = request;
    let mut body = String::new();
    let _ = std::io::Read::read_to_string(&mut request.as_reader(), &mut body);
    let parsed: std::result::Result<serde_json::Value, _> = serde_json::from_str(&body);
    let (reply, status) = match (request.url(), parsed) {
        (_, Err(e)) => (
            serde_json::json!({"error": format!("bad request body: {e}")}).to_string(),
            400,
        ),
        ("/mllm", Ok(_)) => (
            serde_json::json!({"text": config.mllm_text}).to_string(),
            200,
        ),
        ("/ground", Ok(_)) => (
            serde_json::json!({"detections": config.detections}).to_string(),
            200,
        ),
        (other, Ok(_)) => (
            serde_json::json!({"error": format!("unknown endpoint {other}")}).to_string(),
            404,
        ),
    };
    let _ = request.respond(json_response(reply, status));
}

/// A running stub server; shuts down when dropped.
pub struct StubServer {
    port: u16,
    shutdown: Arc<AtomicBool>,
    requests: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds `127.0.0.1:port` (0 picks an ephemeral port) and serves the
    /// configured responses on a background thread.
    pub fn start(config: StubConfig, port: u16) -> Result<Self> {
        let server = tiny_http::Server::http(("127.0.0.1", port))
            .map_err(|e| Error::Transport(format!("binding stub server: {e}")))?;
        let port = match server.server_addr() {
            tiny_http::ListenAddr::IP(addr) => addr.port(),
            _ => unreachable!("stub server binds a TCP address"),
        };
        let shutdown = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicUsize::new(0));
        let flag = Arc::clone(&shutdown);
        let counter = Arc::clone(&requests);
        let handle = std::thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                match server.recv_timeout(Duration::from_millis(25)) {
                    Ok(Some(request)) => {
                        counter.fetch_add(1, Ordering::Relaxed);
                        handle(request, &config);
                    }
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
        });
        Ok(Self {
            port,
            shutdown,
            requests,
            handle: Some(handle),
        })
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    /// URL of the ranking endpoint.
    pub fn mllm_url(&self) -> String {
        format!("http://127.0.0.1:{}/mllm", self.port)
    }

    /// URL of the grounding endpoint.
    pub fn ground_url(&self) -> String {
        format!("http://127.0.0.1:{}/ground", self.port)
    }

    /// Number of requests served so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::client::{RemoteGrounder, RemoteMllm};
    use crate::pipeline::prompt::PromptMode;
    use crate::synth::{generate, SynthSpec};

    #[test]
    fn stub_round_trip_for_both_endpoints() {
        let server = StubServer::start(StubConfig::default(), 0).unwrap();
        let clip = &generate(&SynthSpec {
            n_clips: 1,
            ..SynthSpec::default()
        })
        .unwrap()[0];

        let mllm = RemoteMllm::new(server.mllm_url(), Duration::from_secs(5));
        let resp = mllm.rank(clip, PromptMode::Cot).unwrap();
        assert_eq!(resp.ranking, ["disk0", "disk1", "disk2"]);
        assert_eq!(resp.caption, "Colored disks drift over a noisy background.");

        let grounder = RemoteGrounder::new(server.ground_url(), Duration::from_secs(5));
        let boxes = grounder.ground(&resp.ranking, &clip.frames[0]).unwrap();
        assert_eq!(boxes.len(), 3);
        assert_eq!(boxes[0].0, "disk0");
        assert_eq!(boxes[0].1, BoundingBox::new(2, 2, 10, 10).unwrap());
        assert_eq!(server.requests(), 2);
    }

    #[test]
    fn unmatched_tags_are_omitted_from_grounding() {
        let config = StubConfig {
            detections: vec![StubDetection {
                tag: "disk1".into(),
                bbox: BoundingBox::new(1, 1, 5, 5).unwrap(),
                score: 0.5,
            }],
            ..StubConfig::default()
        };
        let server = StubServer::start(config, 0).unwrap();
        let clip = &generate(&SynthSpec {
            n_clips: 1,
            ..SynthSpec::default()
        })
        .unwrap()[0];
        let grounder = RemoteGrounder::new(server.ground_url(), Duration::from_secs(5));
        let tags = vec!["disk0".to_string(), "disk1".to_string()];
        let boxes = grounder.ground(&tags, &clip.frames[0]).unwrap();
        assert_eq!(boxes, vec![("disk1".to_string(), BoundingBox::new(1, 1, 5, 5).unwrap())]);
    }

    #[test]
    fn unknown_endpoint_is_a_transport_error() {
        let server = StubServer::start(StubConfig::default(), 0).unwrap();
        let mllm = RemoteMllm::new(
            format!("http://127.0.0.1:{}/nope", server.port()),
            Duration::from_secs(5),
        );
        let clip = &generate(&SynthSpec {
            n_clips: 1,
            ..SynthSpec::default()
        })
        .unwrap()[0];
        assert!(matches!(
            mllm.rank(clip, PromptMode::Cot),
            Err(Error::Transport(_))
        ));
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = StubConfig::default();
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(StubConfig::from_json(&text).unwrap(), config);
    }
}
