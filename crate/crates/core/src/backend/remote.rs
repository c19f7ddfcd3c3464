//! Client for a ComfyUI-compatible server: HTTP submission, WebSocket
//! progress, history lookup and artifact download.

use std::io::ErrorKind;
use std::net::TcpStream;
use std::time::{Duration, Instant, SystemTime};

use serde_json::Value;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use super::{
    sim::is_output_node, Backend, BackendError, ExecContext, ExecutionOutcome, JobHandle, ProducedArtifact,
    ProgressEvent,
};
use crate::graph::{NodeId, WorkflowGraph};
use crate::util::next_free_name;

const POLL_SLICE: Duration = Duration::from_millis(200);

pub struct WsSession {
    socket: WebSocket<MaybeTlsStream<TcpStream>>,
}

impl WsSession {
    fn set_read_timeout(&mut self, d: Duration) {
        if let MaybeTlsStream::Plain(s) = self.socket.get_mut() {
            let _ = s.set_read_timeout(Some(d.max(Duration::from_millis(1))));
        }
    }
}

#[derive(Debug)]
enum SubmitError {
    Transport(String),
    Rejected(String),
}

pub struct RemoteBackend {
    base: String,
    client_id: String,
    http: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(base_url: &str) -> Self {
        RemoteBackend {
            base: base_url.trim_end_matches('/').to_string(),
            client_id: uuid::Uuid::new_v4().to_string(),
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("HTTP client builds with static settings"),
        }
    }

    pub fn with_client_id(mut self, id: impl Into<String>) -> Self {
        self.client_id = id.into();
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    /// The exact request body sent to `/prompt`.
    pub fn prompt_body(&self, graph: &WorkflowGraph) -> String {
        format!(
            "{{\"prompt\":{},\"client_id\":{}}}",
            graph.to_json_string(),
            Value::String(self.client_id.clone())
        )
    }

    /// Opens the progress socket. Done before submission so no message for
    /// the job can be missed.
    pub fn connect(&self) -> Result<WsSession, String> {
        let ws_base = if let Some(rest) = self.base.strip_prefix("https://") {
            format!("wss://{rest}")
        } else if let Some(rest) = self.base.strip_prefix("http://") {
            format!("ws://{rest}")
        } else {
            format!("ws://{}", self.base)
        };
        let url = format!("{ws_base}/ws?clientId={}", self.client_id);
        let (socket, _) = tungstenite::connect(url.as_str()).map_err(|e| format!("websocket handshake with {url} failed: {e}"))?;
        Ok(WsSession { socket })
    }

    pub fn submit(&self, graph: &WorkflowGraph) -> Result<JobHandle, String> {
        self.submit_inner(graph).map_err(|e| match e {
            SubmitError::Transport(s) | SubmitError::Rejected(s) => s,
        })
    }

    fn submit_inner(&self, graph: &WorkflowGraph) -> Result<JobHandle, SubmitError> {
        let resp = self
            .http
            .post(format!("{}/prompt", self.base))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(self.prompt_body(graph))
            .send()
            .map_err(|e| SubmitError::Transport(format!("POST /prompt failed: {e}")))?;
        let status = resp.status();
        let body: Value = resp.json().unwrap_or(Value::Null);
        if !status.is_success() {
            return Err(SubmitError::Rejected(rejection_diagnostics(status.as_u16(), &body)));
        }
        let job_id = body
            .get("prompt_id")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| SubmitError::Rejected(format!("server reply has no prompt_id: {body}")))?;
        Ok(JobHandle {
            job_id: job_id.to_string(),
            submitted_at: SystemTime::now(),
        })
    }

    /// Consumes progress messages for `handle` until its terminal message or
    /// the timeout, then collects outputs.
    pub fn monitor(
        &self,
        session: &mut WsSession,
        handle: &JobHandle,
        graph: &WorkflowGraph,
        ctx: ExecContext<'_>,
        on_event: &mut dyn FnMut(&ProgressEvent),
    ) -> ExecutionOutcome {
        let start = Instant::now();
        let deadline = start + ctx.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return ExecutionOutcome::timed_out(
                    format!(
                        "no terminal message for prompt {} within {:.1}s",
                        handle.job_id,
                        ctx.timeout.as_secs_f64()
                    ),
                    start.elapsed(),
                );
            }
            session.set_read_timeout(remaining.min(POLL_SLICE));
            let text = match session.socket.read() {
                Ok(Message::Text(t)) => t.as_str().to_string(),
                Ok(Message::Close(_)) => {
                    return ExecutionOutcome::failed("websocket closed before the job finished", start.elapsed())
                }
                Ok(_) => continue,
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    continue
                }
                Err(e) => return ExecutionOutcome::failed(format!("websocket error: {e}"), start.elapsed()),
            };
            let Ok(msg) = serde_json::from_str::<Value>(&text) else {
                continue;
            };
            let kind = msg.get("type").and_then(Value::as_str).unwrap_or_default();
            let data = msg.get("data").cloned().unwrap_or(Value::Null);
            if let Some(pid) = data.get("prompt_id").and_then(Value::as_str) {
                if pid != handle.job_id {
                    continue;
                }
            }
            let node = data.get("node").and_then(Value::as_str).map(NodeId::from);
            match kind {
                "executing" => {
                    on_event(&ProgressEvent::Executing { node: node.clone() });
                    if node.is_none() && data.get("prompt_id").is_some() {
                        break;
                    }
                }
                "progress" => on_event(&ProgressEvent::Progress {
                    node,
                    value: data.get("value").and_then(Value::as_u64).unwrap_or(0),
                    max: data.get("max").and_then(Value::as_u64).unwrap_or(0),
                }),
                "executed" => {
                    if let Some(node) = node {
                        on_event(&ProgressEvent::Executed { node });
                    }
                }
                "execution_success" => break,
                "execution_error" => {
                    let field = |k: &str| data.get(k).and_then(Value::as_str).unwrap_or("?").to_string();
                    return ExecutionOutcome::failed(
                        format!(
                            "execution error in node {} ({}): {}",
                            field("node_id"),
                            field("node_type"),
                            field("exception_message")
                        ),
                        start.elapsed(),
                    );
                }
                "execution_interrupted" => {
                    return ExecutionOutcome::failed("execution interrupted by the server", start.elapsed())
                }
                other => on_event(&ProgressEvent::Other {
                    kind: other.to_string(),
                    data,
                }),
            }
        }

        match self.fetch_outputs(handle, ctx) {
            Ok(artifacts) => {
                let expects_output = graph.nodes().any(|n| is_output_node(&n.class_type));
                if expects_output && artifacts.is_empty() {
                    ExecutionOutcome::failed(
                        format!("prompt {} finished without any output files", handle.job_id),
                        start.elapsed(),
                    )
                } else {
                    ExecutionOutcome::completed(artifacts, start.elapsed())
                }
            }
            Err(e) => ExecutionOutcome::failed(e, start.elapsed()),
        }
    }

    /// Downloads every file listed in `/history/<id>` into the artifact dir.
    pub fn fetch_outputs(&self, handle: &JobHandle, ctx: ExecContext<'_>) -> Result<Vec<ProducedArtifact>, String> {
        let url = format!("{}/history/{}", self.base, handle.job_id);
        let history: Value = self
            .http
            .get(&url)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| format!("GET {url} failed: {e}"))?;
        let outputs = history
            .get(&handle.job_id)
            .and_then(|h| h.get("outputs"))
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default();

        std::fs::create_dir_all(ctx.artifact_dir).map_err(|e| format!("cannot create artifact dir: {e}"))?;
        let mut artifacts = Vec::new();
        for (node, out) in outputs {
            let files = out
                .as_object()
                .into_iter()
                .flat_map(|o| o.values())
                .filter_map(Value::as_array)
                .flatten()
                .filter(|f| f.get("filename").is_some());
            for file in files {
                let field = |k: &str| file.get(k).and_then(Value::as_str).unwrap_or("").to_string();
                let filename = field("filename");
                let kind = match field("type") {
                    t if t.is_empty() => "output".to_string(),
                    t => t,
                };
                let bytes = self
                    .http
                    .get(format!("{}/view", self.base))
                    .query(&[("filename", filename.as_str()), ("subfolder", &field("subfolder")), ("type", &kind)])
                    .send()
                    .and_then(|r| r.error_for_status())
                    .and_then(|r| r.bytes())
                    .map_err(|e| format!("GET /view for {filename} failed: {e}"))?;
                let ext = std::path::Path::new(&filename)
                    .extension()
                    .and_then(|e| e.to_str())
                    .unwrap_or("bin");
                let path = next_free_name(ctx.artifact_dir, &node, ext);
                std::fs::write(&path, &bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
                artifacts.push(ProducedArtifact {
                    node: NodeId::new(node.clone()),
                    path,
                });
            }
        }
        Ok(artifacts)
    }
}

fn rejection_diagnostics(status: u16, body: &Value) -> String {
    let message = body
        .pointer("/error/message")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| body.to_string());
    let nodes: Vec<&str> = body
        .get("node_errors")
        .and_then(Value::as_object)
        .map(|m| m.keys().map(String::as_str).collect())
        .unwrap_or_default();
    if nodes.is_empty() {
        format!("server rejected prompt (HTTP {status}): {message}")
    } else {
        format!(
            "server rejected prompt (HTTP {status}): {message}; node errors at {}",
            nodes.join(", ")
        )
    }
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn execute(&self, graph: &WorkflowGraph, ctx: ExecContext<'_>) -> ExecutionOutcome {
        let start = Instant::now();
        let mut session = match self.connect() {
            Ok(s) => s,
            Err(e) => return ExecutionOutcome::failed(e, start.elapsed()),
        };
        let handle = match self.submit_inner(graph) {
            Ok(h) => h,
            Err(SubmitError::Transport(e) | SubmitError::Rejected(e)) => {
                return ExecutionOutcome::failed(e, start.elapsed())
            }
        };
        let mut out = self.monitor(&mut session, &handle, graph, ctx, &mut |_| {});
        let _ = session.socket.close(None);
        out.duration = start.elapsed();
        out
    }

    fn ensure_reachable(&self) -> Result<(), BackendError> {
        self.http
            .get(format!("{}/system_stats", self.base))
            .timeout(Duration::from_secs(5))
            .send()
            .map(|_| ())
            .map_err(|e| BackendError::Unreachable {
                url: self.base.clone(),
                detail: e.to_string(),
            })
    }
}
