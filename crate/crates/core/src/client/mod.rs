//! Streaming client for OpenAI-compatible completion servers.
//!
//! Each request is timestamped against the run origin: `issued_at` right
//! before the request is written, `first_token_at` at the first event that
//! carries non-empty text, `completed_at` at the event carrying a finish
//! reason.

mod sse;

use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use sse::{SseDecoder, SseEvent};

use crate::scenario::{QueryErrorKind, QueryMeasurement, QuerySample};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid endpoint config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub request_timeout: Duration,
    /// Streaming is needed for TTFT; a non-streaming request reports TTFT
    /// equal to the full latency.
    pub stream: bool,
    /// Static bearer token, passed through unchanged.
    pub api_key: Option<String>,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            request_timeout: Duration::from_secs(60),
            stream: true,
            api_key: None,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.base_url.trim().is_empty() {
            return Err(ClientError::Config("base_url is empty".into()));
        }
        if self.request_timeout.is_zero() {
            return Err(ClientError::Config("request_timeout must be > 0".into()));
        }
        Ok(())
    }

    fn root(&self) -> &str {
        let base = self.base_url.trim_end_matches('/');
        base.strip_suffix("/v1").unwrap_or(base)
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.root(), path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

/// One decoded stream frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenEvent {
    pub request_id: u64,
    pub token_text: String,
    pub is_final: bool,
    pub usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct CompletionChunk {
    #[serde(default)]
    choices: Vec<ChunkChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct ChunkChoice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    delta: Option<ChunkDelta>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChunkDelta {
    #[serde(default)]
    content: Option<String>,
}

/// Decodes the JSON payload of one `data:` frame into a [`TokenEvent`].
/// Accepts both completion (`choices[].text`) and chat (`choices[].delta.content`)
/// shapes.
pub fn decode_frame(request_id: u64, data: &str) -> Result<TokenEvent, String> {
    let chunk: CompletionChunk =
        serde_json::from_str(data).map_err(|e| format!("malformed frame: {e}"))?;
    let mut token_text = String::new();
    let mut is_final = false;
    for choice in &chunk.choices {
        if let Some(t) = &choice.text {
            token_text.push_str(t);
        } else if let Some(c) = choice.delta.as_ref().and_then(|d| d.content.as_ref()) {
            token_text.push_str(c);
        }
        is_final |= choice.finish_reason.is_some();
    }
    Ok(TokenEvent {
        request_id,
        token_text,
        is_final,
        usage: chunk.usage,
    })
}

/// Shareable handle; clones reuse the same connection pool.
#[derive(Debug, Clone)]
pub struct InferenceClient {
    http: reqwest::Client,
    endpoint: Arc<EndpointConfig>,
}

#[derive(Default)]
struct StreamState {
    first_token_at: Option<u64>,
    completed_at: Option<u64>,
    text: String,
    token_events: u64,
    usage: Option<Usage>,
}

impl StreamState {
    fn apply(&mut self, ev: TokenEvent, now: u64) {
        if !ev.token_text.is_empty() {
            self.token_events += 1;
            self.first_token_at.get_or_insert(now);
            self.text.push_str(&ev.token_text);
        }
        if ev.usage.is_some() {
            self.usage = ev.usage;
        }
        if ev.is_final && self.completed_at.is_none() {
            self.completed_at = Some(now);
        }
    }

    fn output_tokens(&self) -> u64 {
        match self.usage {
            Some(u) if u.completion_tokens > 0 => u.completion_tokens,
            _ => self.token_events,
        }
    }
}

type Failure = (QueryErrorKind, String);

fn classify(err: &reqwest::Error) -> QueryErrorKind {
    if err.is_timeout() {
        QueryErrorKind::Timeout
    } else if err.is_connect() || err.is_request() {
        QueryErrorKind::Transport
    } else {
        QueryErrorKind::Protocol
    }
}

impl InferenceClient {
    pub fn new(endpoint: EndpointConfig) -> Result<Self, ClientError> {
        endpoint.validate()?;
        let http = reqwest::Client::builder()
            .connect_timeout(endpoint.request_timeout.min(Duration::from_secs(10)))
            .pool_max_idle_per_host(1024)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self {
            http,
            endpoint: Arc::new(endpoint),
        })
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    /// Succeeds if anything answers HTTP at the endpoint, whatever the status.
    pub async fn check_reachable(&self) -> Result<(), ClientError> {
        self.http
            .get(self.endpoint.url("/health"))
            .timeout(self.endpoint.request_timeout)
            .send()
            .await
            .map(|_| ())
            .map_err(|e| ClientError::Transport(e.to_string()))
    }

    /// Asks the server who it is: `"<framework> <version>"`, or `"unknown"`
    /// when there is no identity route.
    pub async fn probe(&self) -> Result<String, ClientError> {
        let resp = self
            .http
            .get(self.endpoint.url("/version"))
            .timeout(self.endpoint.request_timeout)
            .send()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Ok("unknown".to_string());
        }
        let body: serde_json::Value = match resp.json().await {
            Ok(v) => v,
            Err(_) => return Ok("unknown".to_string()),
        };
        let version = body.get("version").and_then(|v| v.as_str());
        let framework = body.get("framework").and_then(|v| v.as_str());
        Ok(match (framework, version) {
            (Some(f), Some(v)) => format!("{f} {v}"),
            (Some(f), None) => f.to_string(),
            // A bare {"version": ...} is what vLLM answers on /version.
            (None, Some(v)) => format!("vLLM v{}", v.trim_start_matches('v')),
            (None, None) => "unknown".to_string(),
        })
    }

    /// Sends one completion request and measures it. Failures are reported on
    /// the returned measurement, never as an `Err`.
    pub async fn send_query(
        &self,
        sample: &QuerySample,
        seq: u64,
        origin: Instant,
        scheduled_at: u64,
    ) -> QueryMeasurement {
        let now = || origin.elapsed().as_nanos() as u64;
        let mut state = StreamState::default();
        let issued_at = now();
        let outcome = tokio::time::timeout(
            self.endpoint.request_timeout,
            self.exchange(sample, seq, &mut state, &now),
        )
        .await
        .unwrap_or_else(|_| Err((QueryErrorKind::Timeout, "request timed out".into())));

        let output_tokens = state.output_tokens();
        let (error, error_message) = match outcome {
            Ok(()) => (None, None),
            Err((kind, msg)) => (Some(kind), Some(msg)),
        };
        QueryMeasurement {
            id: seq,
            sample_id: sample.id,
            scheduled_at,
            issued_at,
            first_token_at: state.first_token_at,
            completed_at: if error.is_none() {
                state.completed_at
            } else {
                None
            },
            output_tokens,
            output_text: state.text,
            error,
            error_message,
        }
    }

    async fn exchange(
        &self,
        sample: &QuerySample,
        seq: u64,
        state: &mut StreamState,
        now: &impl Fn() -> u64,
    ) -> Result<(), Failure> {
        let body = json!({
            "model": self.endpoint.model_name,
            "prompt": sample.prompt_text,
            "max_tokens": sample.requested_output_tokens,
            "stream": self.endpoint.stream,
            "temperature": 0,
        });
        let mut req = self
            .http
            .post(self.endpoint.url("/v1/completions"))
            .json(&body);
        if let Some(key) = &self.endpoint.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| (classify(&e), e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err((QueryErrorKind::Protocol, format!("HTTP {status}")));
        }

        if !self.endpoint.stream {
            let bytes = resp
                .bytes()
                .await
                .map_err(|e| (classify(&e), e.to_string()))?;
            let ev = decode_frame(seq, &String::from_utf8_lossy(&bytes))
                .map_err(|e| (QueryErrorKind::Protocol, e))?;
            let t = now();
            state.apply(ev, t);
            state.completed_at.get_or_insert(t);
            return finish(state);
        }

        let mut decoder = SseDecoder::new();
        let mut stream = resp.bytes_stream();
        let mut done = false;
        while let Some(chunk) = stream.next().await {
            let chunk = chunk.map_err(|e| {
                (
                    QueryErrorKind::Protocol,
                    format!(
                        "stream interrupted after {} tokens: {e}",
                        state.token_events
                    ),
                )
            })?;
            for event in decoder.push(&chunk) {
                if event.data.trim() == "[DONE]" {
                    done = true;
                    state.completed_at.get_or_insert_with(now);
                    break;
                }
                let ev =
                    decode_frame(seq, &event.data).map_err(|e| (QueryErrorKind::Protocol, e))?;
                state.apply(ev, now());
            }
            if done {
                break;
            }
        }
        if state.completed_at.is_none() {
            return Err((
                QueryErrorKind::Protocol,
                format!(
                    "stream closed before final event after {} tokens",
                    state.token_events
                ),
            ));
        }
        finish(state)
    }
}

fn finish(state: &StreamState) -> Result<(), Failure> {
    if state.first_token_at.is_none() {
        return Err((
            QueryErrorKind::Protocol,
            "completion carried no tokens".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_completion_and_chat_frames() {
        let ev = decode_frame(3, r#"{"choices":[{"text":" hi","finish_reason":null}]}"#).unwrap();
        assert_eq!(ev.token_text, " hi");
        assert!(!ev.is_final);
        let ev = decode_frame(
            3,
            r#"{"choices":[{"delta":{"content":"x"},"finish_reason":"length"}],"usage":{"prompt_tokens":2,"completion_tokens":9}}"#,
        )
        .unwrap();
        assert_eq!(ev.token_text, "x");
        assert!(ev.is_final);
        assert_eq!(ev.usage.unwrap().completion_tokens, 9);
        assert!(decode_frame(0, "not json").is_err());
    }

    #[test]
    fn usage_overrides_event_count() {
        let mut s = StreamState::default();
        s.apply(
            TokenEvent {
                request_id: 0,
                token_text: "ab".into(),
                is_final: false,
                usage: None,
            },
            5,
        );
        assert_eq!(s.output_tokens(), 1);
        s.apply(
            TokenEvent {
                request_id: 0,
                token_text: String::new(),
                is_final: true,
                usage: Some(Usage {
                    prompt_tokens: 1,
                    completion_tokens: 2,
                }),
            },
            9,
        );
        assert_eq!(s.output_tokens(), 2);
        assert_eq!(s.first_token_at, Some(5));
        assert_eq!(s.completed_at, Some(9));
    }

    #[test]
    fn empty_text_does_not_stamp_first_token() {
        let mut s = StreamState::default();
        s.apply(
            TokenEvent {
                request_id: 0,
                token_text: String::new(),
                is_final: false,
                usage: None,
            },
            1,
        );
        assert_eq!(s.first_token_at, None);
    }

    #[test]
    fn endpoint_urls() {
        let e = EndpointConfig::new("http://h:1/v1/", "m");
        assert_eq!(e.url("/v1/completions"), "http://h:1/v1/completions");
        assert_eq!(e.url("/version"), "http://h:1/version");
        assert!(EndpointConfig::new(" ", "m").validate().is_err());
    }
}
