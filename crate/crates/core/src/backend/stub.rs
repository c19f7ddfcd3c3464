//! Scriptable in-process server speaking the subset of the ComfyUI protocol
//! the remote backend uses, plus a chat endpoint for the remote adapters.
//!
//! ```yaml
//! scenarios:
//!   - complete
//!   - execution_error: { node: "7", message: "CUDA out of memory" }
//!   - reject: { node: "7", message: "value not in list" }
//!   - hang
//! chat_replies:
//!   - "```json\n{\"workflow\": \"flux-text-to-image\", \"arguments\": {\"prompt\": \"x\"}}\n```"
//! chat_failures: 0
//! ```
//!
//! Prompts consume scenarios in order; the last one repeats.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Map, Value};
use tokio::sync::{mpsc, oneshot};

use super::artifact_extension;
use super::sim::is_output_node;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Complete,
    ExecutionError { node: String, message: String },
    Reject { node: String, message: String },
    Hang,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubScript {
    pub scenarios: Vec<Scenario>,
    pub chat_replies: Vec<String>,
    /// The first `chat_failures` chat requests get HTTP 503.
    pub chat_failures: u32,
}

impl StubScript {
    pub fn single(s: Scenario) -> Self {
        StubScript {
            scenarios: vec![s],
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_yaml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// One accepted or rejected `/prompt` request.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedPrompt {
    pub prompt_id: Option<String>,
    pub client_id: Option<String>,
    /// The `prompt` member exactly as it appeared in the request body.
    pub prompt_text: String,
    pub body: String,
}

#[derive(Default)]
struct Inner {
    script: StubScript,
    prompt_count: usize,
    chat_count: usize,
    prompts: Vec<RecordedPrompt>,
    chat_requests: Vec<Value>,
    sockets: HashMap<String, mpsc::UnboundedSender<String>>,
    pending: HashMap<String, Vec<String>>,
    history: HashMap<String, Value>,
    files: HashMap<String, Vec<u8>>,
}

impl Inner {
    fn deliver(&mut self, client: &str, messages: Vec<String>) {
        match self.sockets.get(client) {
            Some(tx) => {
                for m in messages {
                    let _ = tx.send(m);
                }
            }
            None => self.pending.entry(client.to_string()).or_default().extend(messages),
        }
    }
}

type Shared = Arc<Mutex<Inner>>;

pub struct StubServer {
    addr: SocketAddr,
    state: Shared,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds `addr` (port 0 picks a free port) and serves on a background
    /// thread until dropped.
    pub fn start(script: StubScript, addr: SocketAddr) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state: Shared = Arc::new(Mutex::new(Inner {
            script,
            ..Default::default()
        }));
        let (tx, rx) = oneshot::channel();
        let app = router(state.clone());
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let thread = std::thread::Builder::new().name("stub-server".into()).spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener converts");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        })?;
        Ok(StubServer {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    /// Starts on 127.0.0.1 with an ephemeral port.
    pub fn start_local(script: StubScript) -> std::io::Result<Self> {
        StubServer::start(script, SocketAddr::from(([127, 0, 0, 1], 0)))
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn chat_url(&self) -> String {
        format!("http://{}/chat", self.addr)
    }

    pub fn recorded_prompts(&self) -> Vec<RecordedPrompt> {
        self.state.lock().expect("stub state lock").prompts.clone()
    }

    pub fn chat_requests(&self) -> Vec<Value> {
        self.state.lock().expect("stub state lock").chat_requests.clone()
    }

    /// Blocks until the serving thread exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn router(state: Shared) -> Router {
    Router::new()
        .route("/prompt", post(submit_prompt))
        .route("/history/{id}", get(history))
        .route("/view", get(view))
        .route("/ws", get(ws_upgrade))
        .route("/system_stats", get(|| async { Json(json!({"system": {"os": "stub"}, "devices": []})) }))
        .route("/chat", post(chat))
        .with_state(state)
}

#[derive(Deserialize)]
struct PromptBody<'a> {
    #[serde(borrow)]
    prompt: &'a RawValue,
    #[serde(default)]
    client_id: Option<String>,
}

fn msg(kind: &str, data: Value) -> String {
    json!({"type": kind, "data": data}).to_string()
}

async fn submit_prompt(State(state): State<Shared>, body: String) -> Response {
    let parsed: PromptBody = match serde_json::from_str(&body) {
        Ok(p) => p,
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({"error": {"type": "invalid_prompt", "message": e.to_string()}, "node_errors": {}})),
            )
                .into_response()
        }
    };
    let prompt_text = parsed.prompt.get().to_string();
    let client = parsed.client_id.clone().unwrap_or_default();
    let graph: Map<String, Value> = serde_json::from_str(&prompt_text).unwrap_or_default();

    let mut inner = state.lock().expect("stub state lock");
    let scenario = match inner.script.scenarios.as_slice() {
        [] => Scenario::Complete,
        list => list[inner.prompt_count.min(list.len() - 1)].clone(),
    };
    inner.prompt_count += 1;
    let number = inner.prompt_count;

    if let Scenario::Reject { node, message } = &scenario {
        inner.prompts.push(RecordedPrompt {
            prompt_id: None,
            client_id: parsed.client_id,
            prompt_text,
            body,
        });
        let class = graph.get(node).and_then(|n| n.get("class_type")).cloned().unwrap_or(Value::Null);
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({
                "error": {"type": "prompt_outputs_failed_validation", "message": "Prompt outputs failed validation"},
                "node_errors": {node.as_str(): {"errors": [{"message": message}], "class_type": class}},
            })),
        )
            .into_response();
    }

    let prompt_id = uuid::Uuid::new_v4().to_string();
    inner.prompts.push(RecordedPrompt {
        prompt_id: Some(prompt_id.clone()),
        client_id: parsed.client_id,
        prompt_text,
        body,
    });

    let mut messages = vec![msg("execution_start", json!({"prompt_id": prompt_id}))];
    match &scenario {
        Scenario::Complete => {
            let mut outputs = Map::new();
            for (node, def) in &graph {
                messages.push(msg("executing", json!({"node": node, "prompt_id": prompt_id})));
                let class = def.get("class_type").and_then(Value::as_str).unwrap_or_default();
                if is_output_node(class) {
                    let filename = format!("atelier_stub_{number}_{node}.{}", artifact_extension(class));
                    let bytes = format!("stub artifact {prompt_id} node {node}").into_bytes();
                    inner.files.insert(filename.clone(), bytes);
                    let entry = json!({"images": [{"filename": filename, "subfolder": "", "type": "output"}]});
                    messages.push(msg("executed", json!({"node": node, "output": entry, "prompt_id": prompt_id})));
                    outputs.insert(node.clone(), entry);
                }
            }
            messages.push(msg("executing", json!({"node": null, "prompt_id": prompt_id})));
            inner.history.insert(
                prompt_id.clone(),
                json!({prompt_id.as_str(): {"outputs": outputs, "status": {"status_str": "success", "completed": true}}}),
            );
        }
        Scenario::ExecutionError { node, message } => {
            let class = graph.get(node).and_then(|n| n.get("class_type")).cloned().unwrap_or(Value::Null);
            messages.push(msg("executing", json!({"node": node, "prompt_id": prompt_id})));
            messages.push(msg(
                "execution_error",
                json!({"prompt_id": prompt_id, "node_id": node, "node_type": class, "exception_message": message}),
            ));
            inner.history.insert(
                prompt_id.clone(),
                json!({prompt_id.as_str(): {"outputs": {}, "status": {"status_str": "error", "completed": false}}}),
            );
        }
        Scenario::Hang | Scenario::Reject { .. } => {}
    }
    inner.deliver(&client, messages);
    Json(json!({"prompt_id": prompt_id, "number": number, "node_errors": {}})).into_response()
}

async fn history(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Json<Value> {
    let inner = state.lock().expect("stub state lock");
    Json(inner.history.get(&id).cloned().unwrap_or_else(|| json!({})))
}

#[derive(Deserialize)]
struct ViewQuery {
    filename: String,
}

async fn view(State(state): State<Shared>, Query(q): Query<ViewQuery>) -> Response {
    let inner = state.lock().expect("stub state lock");
    match inner.files.get(&q.filename) {
        Some(bytes) => bytes.clone().into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

#[derive(Deserialize)]
struct WsQuery {
    #[serde(rename = "clientId", default)]
    client_id: String,
}

async fn ws_upgrade(State(state): State<Shared>, Query(q): Query<WsQuery>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| ws_session(state, q.client_id, socket))
}

async fn ws_session(state: Shared, client: String, mut socket: WebSocket) {
    let (tx, mut rx) = mpsc::unbounded_channel();
    {
        let mut inner = state.lock().expect("stub state lock");
        let _ = tx.send(msg("status", json!({"status": {"exec_info": {"queue_remaining": 0}}, "sid": client})));
        for m in inner.pending.remove(&client).unwrap_or_default() {
            let _ = tx.send(m);
        }
        inner.sockets.insert(client.clone(), tx);
    }
    loop {
        tokio::select! {
            out = rx.recv() => match out {
                Some(text) => if socket.send(Message::Text(text.into())).await.is_err() { break },
                None => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    state.lock().expect("stub state lock").sockets.remove(&client);
}

async fn chat(State(state): State<Shared>, Json(request): Json<Value>) -> Response {
    let mut inner = state.lock().expect("stub state lock");
    inner.chat_requests.push(request);
    let n = inner.chat_count;
    inner.chat_count += 1;
    if (n as u32) < inner.script.chat_failures {
        return (StatusCode::SERVICE_UNAVAILABLE, "scripted chat failure").into_response();
    }
    let served = n - inner.script.chat_failures as usize;
    let content = match inner.script.chat_replies.as_slice() {
        [] => String::new(),
        list => list[served.min(list.len() - 1)].clone(),
    };
    Json(json!({"content": content})).into_response()
}
