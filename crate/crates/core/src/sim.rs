//! Deterministic stand-in for an OpenAI-compatible inference server.
//!
//! Timing model per request: wait FIFO for one of `max_concurrency` decode
//! slots, then emit the first token after
//! `prefill_base + prefill_per_token * n_in` and one more token every
//! `decode_per_token`, each delay scaled by a seeded uniform factor in
//! `[1 - jitter, 1 + jitter]`. The last token frame carries the finish reason
//! and usage counts. Saturated throughput is therefore
//! `max_concurrency * n / (prefill + (n - 1) * decode)`.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, Semaphore};
use tokio::task::JoinHandle;
use tokio::time::Instant;

pub const SIM_FRAMEWORK: &str = "flexsim";
pub const SIM_VERSION: &str = env!("CARGO_PKG_VERSION");

const FILLER_WORDS: &[&str] = &[
    "the",
    "model",
    "server",
    "token",
    "latency",
    "batch",
    "queue",
    "cache",
    "prompt",
    "value",
    "system",
    "answer",
    "result",
    "stream",
    "request",
    "memory",
    "speed",
    "throughput",
    "cost",
    "data",
    "graph",
    "layer",
    "weight",
    "tensor",
    "kernel",
    "node",
    "score",
    "summary",
    "text",
    "input",
    "output",
    "signal",
];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("failed to bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
}

/// Performance model of the simulated server. Times are milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimProfile {
    pub prefill_base_ms: f64,
    pub prefill_per_token_ms: f64,
    pub decode_per_token_ms: f64,
    pub max_concurrency: usize,
    pub jitter_pct: f64,
    pub seed: u64,
}

impl Default for SimProfile {
    fn default() -> Self {
        Self {
            prefill_base_ms: 50.0,
            prefill_per_token_ms: 0.0,
            decode_per_token_ms: 10.0,
            max_concurrency: 4,
            jitter_pct: 0.0,
            seed: 0,
        }
    }
}

impl SimProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        let times = [
            self.prefill_base_ms,
            self.prefill_per_token_ms,
            self.decode_per_token_ms,
        ];
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(SimError::InvalidProfile(
                "times must be finite and >= 0".into(),
            ));
        }
        if self.max_concurrency == 0 {
            return Err(SimError::InvalidProfile(
                "max_concurrency must be >= 1".into(),
            ));
        }
        if !(0.0..=50.0).contains(&self.jitter_pct) {
            return Err(SimError::InvalidProfile(
                "jitter_pct must be in [0, 50]".into(),
            ));
        }
        Ok(())
    }

    pub fn prefill_ms(&self, prompt_tokens: usize) -> f64 {
        self.prefill_base_ms + self.prefill_per_token_ms * prompt_tokens as f64
    }

    /// Service time of one request with `n_out` output tokens, ignoring queueing
    /// and jitter.
    pub fn service_ms(&self, prompt_tokens: usize, n_out: usize) -> f64 {
        self.prefill_ms(prompt_tokens) + self.decode_per_token_ms * n_out.saturating_sub(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityReport {
    pub identity: String,
    pub profile: SimProfile,
}

fn identity() -> String {
    format!("{SIM_FRAMEWORK} {SIM_VERSION}")
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Token text the simulator emits at `position` for `prompt`. Deterministic,
/// so tests can build exact references.
pub fn filler_token(prompt: &str, position: usize) -> String {
    let h = fnv1a(prompt);
    let idx =
        h.wrapping_add((position as u64).wrapping_mul(0x9e37_79b9)) % FILLER_WORDS.len() as u64;
    format!(" {}", FILLER_WORDS[idx as usize])
}

/// Full completion text for `n` tokens.
pub fn filler_text(prompt: &str, n: usize) -> String {
    (0..n).map(|i| filler_token(prompt, i)).collect()
}

struct SimState {
    profile: SimProfile,
    slots: Arc<Semaphore>,
    requests: AtomicU64,
}

/// A running simulator. Dropping the handle leaves the server running until
/// [`SimHandle::shutdown`] is called or the runtime exits.
pub struct SimHandle {
    addr: SocketAddr,
    state: Arc<SimState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl SimHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn capability_report(&self) -> CapabilityReport {
        CapabilityReport {
            identity: identity(),
            profile: self.state.profile.clone(),
        }
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    /// Resolves when the server stops (for foreground use from a CLI).
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

/// Starts the simulator on `addr` (port 0 picks a free port).
pub async fn serve(profile: SimProfile, addr: SocketAddr) -> Result<SimHandle, SimError> {
    profile.validate()?;
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| SimError::Bind { addr, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| SimError::Bind { addr, source })?;
    let state = Arc::new(SimState {
        slots: Arc::new(Semaphore::new(profile.max_concurrency)),
        profile,
        requests: AtomicU64::new(0),
    });
    let app = router(state.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(SimHandle {
        addr,
        state,
        shutdown: Some(tx),
        task: Some(task),
    })
}

fn router(state: Arc<SimState>) -> Router {
    Router::new()
        .route("/v1/completions", post(completions))
        .route("/version", get(version))
        .route("/health", get(|| async { "ok" }))
        .route("/sim/profile", get(profile_route))
        .with_state(state)
}

async fn version() -> Json<serde_json::Value> {
    Json(json!({ "framework": SIM_FRAMEWORK, "version": SIM_VERSION }))
}

async fn profile_route(State(state): State<Arc<SimState>>) -> Json<CapabilityReport> {
    Json(CapabilityReport {
        identity: identity(),
        profile: state.profile.clone(),
    })
}

#[derive(Debug, Deserialize)]
struct CompletionRequest {
    #[serde(default)]
    model: String,
    prompt: String,
    #[serde(default = "default_max_tokens")]
    max_tokens: u32,
    #[serde(default)]
    stream: bool,
}

fn default_max_tokens() -> u32 {
    16
}

struct Generation {
    id: String,
    model: String,
    prompt: String,
    prompt_tokens: usize,
    n_out: usize,
}

impl Generation {
    fn frame(&self, position: usize) -> serde_json::Value {
        let last = position + 1 == self.n_out;
        let mut frame = json!({
            "id": self.id,
            "object": "text_completion",
            "model": self.model,
            "choices": [{
                "index": 0,
                "text": filler_token(&self.prompt, position),
                "finish_reason": if last { json!("length") } else { json!(null) },
            }],
        });
        if last {
            frame["usage"] = self.usage();
        }
        frame
    }

    fn usage(&self) -> serde_json::Value {
        json!({
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.n_out,
            "total_tokens": self.prompt_tokens + self.n_out,
        })
    }
}

async fn completions(
    State(state): State<Arc<SimState>>,
    Json(req): Json<CompletionRequest>,
) -> Response {
    if req.max_tokens == 0 {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({"error": "max_tokens must be >= 1"})),
        )
            .into_response();
    }
    let seq = state.requests.fetch_add(1, Ordering::Relaxed);
    let gen = Generation {
        id: format!("cmpl-sim-{seq}"),
        model: req.model,
        prompt_tokens: req.prompt.split_whitespace().count(),
        prompt: req.prompt,
        n_out: req.max_tokens as usize,
    };
    let rng =
        ChaCha8Rng::seed_from_u64(state.profile.seed ^ seq.wrapping_mul(0x9e37_79b9_7f4a_7c15));

    if req.stream {
        let (tx, rx) = mpsc::channel::<Result<Bytes, Infallible>>(64);
        tokio::spawn(generate(state, gen, rng, tx));
        let body = Body::from_stream(futures::stream::unfold(rx, |mut rx| async move {
            rx.recv().await.map(|item| (item, rx))
        }));
        Response::builder()
            .header(header::CONTENT_TYPE, "text/event-stream")
            .header(header::CACHE_CONTROL, "no-cache")
            .body(body)
            .expect("static response parts")
    } else {
        let (tx, mut rx) = mpsc::channel::<Result<Bytes, Infallible>>(64);
        let text = filler_text(&gen.prompt, gen.n_out);
        let usage = gen.usage();
        let id = gen.id.clone();
        let model = gen.model.clone();
        tokio::spawn(generate(state, gen, rng, tx));
        while rx.recv().await.is_some() {}
        Json(json!({
            "id": id,
            "object": "text_completion",
            "model": model,
            "choices": [{"index": 0, "text": text, "finish_reason": "length"}],
            "usage": usage,
        }))
        .into_response()
    }
}

fn jittered(base_ms: f64, jitter_pct: f64, rng: &mut ChaCha8Rng) -> Duration {
    let factor = if jitter_pct > 0.0 {
        let j = jitter_pct / 100.0;
        1.0 + j * (2.0 * rng.random::<f64>() - 1.0)
    } else {
        1.0
    };
    Duration::from_secs_f64((base_ms * factor).max(0.0) / 1e3)
}

/// Emits the token frames for one request on `tx`. Holds a decode slot for
/// the whole prefill + decode span; stops early if the client disconnects.
async fn generate(
    state: Arc<SimState>,
    gen: Generation,
    mut rng: ChaCha8Rng,
    tx: mpsc::Sender<Result<Bytes, Infallible>>,
) {
    let Ok(_slot) = state.slots.clone().acquire_owned().await else {
        return;
    };
    let profile = &state.profile;
    let start = Instant::now();
    let mut deadline = start
        + jittered(
            profile.prefill_ms(gen.prompt_tokens),
            profile.jitter_pct,
            &mut rng,
        );
    for position in 0..gen.n_out {
        tokio::time::sleep_until(deadline).await;
        let frame = format!("data: {}\n\n", gen.frame(position));
        if tx.send(Ok(Bytes::from(frame))).await.is_err() {
            return;
        }
        deadline += jittered(profile.decode_per_token_ms, profile.jitter_pct, &mut rng);
    }
    let _ = tx.send(Ok(Bytes::from_static(b"data: [DONE]\n\n"))).await;
}
