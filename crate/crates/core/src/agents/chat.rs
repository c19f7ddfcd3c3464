//! Adapters backed by a generic chat-completion endpoint.
//!
//! Request: `POST {model, messages: [{role, content}], temperature}`.
//! Response: `{content}`; the common `choices[0].message.content` shape is
//! accepted too.

use std::path::Path;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    AdapterFailure, AdapterFailureKind, Annotator, EvalRequest, EvalVerdict, Evaluator, PlanRequest, Planner,
    PlannerProposal, Preprocessor, PromptRole, PromptSet,
};
use crate::workspace::{Annotation, ArtifactKind};

const INLINE_IMAGE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatConfig {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl ChatConfig {
    pub fn new(url: impl Into<String>) -> Self {
        ChatConfig {
            url: url.into(),
            key: None,
            model: "gpt-4o".into(),
            temperature: 0.2,
            retries: 2,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads `ATELIER_LLM_URL`, `ATELIER_LLM_KEY` and `ATELIER_LLM_MODEL`.
    pub fn from_env() -> Result<Self, String> {
        let url = std::env::var("ATELIER_LLM_URL").map_err(|_| "ATELIER_LLM_URL is not set".to_string())?;
        let mut cfg = ChatConfig::new(url);
        cfg.key = std::env::var("ATELIER_LLM_KEY").ok().filter(|k| !k.is_empty());
        if let Ok(model) = std::env::var("ATELIER_LLM_MODEL") {
            cfg.model = model;
        }
        Ok(cfg)
    }
}

pub struct ChatClient {
    cfg: ChatConfig,
    http: reqwest::blocking::Client,
}

impl ChatClient {
    pub fn new(cfg: ChatConfig) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .expect("HTTP client builds with static settings");
        ChatClient { cfg, http }
    }

    pub fn config(&self) -> &ChatConfig {
        &self.cfg
    }

    /// Sends one completion request, retrying transport faults and 5xx/429
    /// replies with doubling backoff.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, AdapterFailure> {
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
        });
        let mut last_error = String::new();
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                std::thread::sleep(self.cfg.backoff * 2u32.pow(attempt - 1));
            }
            let mut req = self.http.post(&self.cfg.url).json(&body);
            if let Some(key) = &self.cfg.key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = format!("chat request failed: {e}");
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() || status.as_u16() == 429 {
                last_error = format!("chat endpoint returned HTTP {status}");
                continue;
            }
            if !status.is_success() {
                return Err(AdapterFailure::new(
                    AdapterFailureKind::Transport,
                    format!("chat endpoint returned HTTP {status}"),
                ));
            }
            let reply: Value = resp.json().map_err(|e| {
                AdapterFailure::new(AdapterFailureKind::Unparseable, format!("chat reply is not JSON: {e}"))
            })?;
            let content = reply
                .get("content")
                .or_else(|| reply.pointer("/choices/0/message/content"))
                .and_then(Value::as_str)
                .ok_or_else(|| {
                    AdapterFailure::new(AdapterFailureKind::Unparseable, "chat reply has no content")
                        .with_raw(reply.to_string())
                })?;
            return Ok(content.to_string());
        }
        Err(AdapterFailure::new(
            AdapterFailureKind::Transport,
            format!("{last_error} (after {} retries)", self.cfg.retries),
        ))
    }
}

/// Body of the first ``` fenced block, language tag removed.
pub fn extract_fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")? + 3;
    let rest = &text[start..];
    let body_start = rest.find('\n').map(|i| i + 1).unwrap_or(0);
    let end = rest[body_start..].find("```")?;
    Some(rest[body_start..body_start + end].trim())
}

fn fenced_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, AdapterFailure> {
    let block = extract_fenced_block(text).ok_or_else(|| {
        AdapterFailure::new(AdapterFailureKind::Unparseable, format!("{what} reply has no fenced block")).with_raw(text)
    })?;
    serde_json::from_str(block).map_err(|e| {
        AdapterFailure::new(AdapterFailureKind::Unparseable, format!("{what} block does not parse: {e}")).with_raw(text)
    })
}

/// Parses a planner reply into a proposal.
pub fn parse_proposal(text: &str) -> Result<PlannerProposal, AdapterFailure> {
    fenced_json(text, "planner")
}

pub struct ChatPlanner {
    client: ChatClient,
    prompts: PromptSet,
}

impl ChatPlanner {
    pub fn new(client: ChatClient, prompts: PromptSet) -> Self {
        ChatPlanner { client, prompts }
    }

    pub fn messages(&self, req: &PlanRequest<'_>) -> Vec<ChatMessage> {
        let system = [PromptRole::Planning, PromptRole::ToolsDefinition, PromptRole::Adaptation]
            .map(|r| self.prompts.get(r).trim())
            .join("\n\n");
        let ws = req.workspace;
        let mut user = format!("# Task\n{}\n\n# Workspace\n", ws.enriched_spec.trim());
        if ws.context_log().is_empty() {
            user.push_str("(empty)\n");
        }
        for entry in ws.context_log() {
            user.push_str(&format!("- {entry}\n"));
        }
        user.push_str("\n# Files\n");
        for a in ws.artifacts() {
            user.push_str(&format!("- {} ({})\n", a.path.display(), a.kind.as_str()));
        }
        user.push_str(&format!("\n{}\n", req.library_context.trim()));
        if !req.feedback.is_empty() {
            user.push_str("\n# Feedback on earlier attempts at this step\n");
            for (i, f) in req.feedback.iter().enumerate() {
                user.push_str(&format!("{}. {f}\n", i + 1));
            }
        }
        vec![ChatMessage::system(system), ChatMessage::user(user)]
    }
}

impl Planner for ChatPlanner {
    fn propose(&self, req: &PlanRequest<'_>) -> Result<PlannerProposal, AdapterFailure> {
        let reply = self.client.complete(&self.messages(req))?;
        parse_proposal(&reply)
    }
}

pub struct ChatEvaluator {
    client: ChatClient,
    prompts: PromptSet,
}

impl ChatEvaluator {
    pub fn new(client: ChatClient, prompts: PromptSet) -> Self {
        ChatEvaluator { client, prompts }
    }
}

impl Evaluator for ChatEvaluator {
    fn evaluate(&self, req: &EvalRequest<'_>) -> Result<EvalVerdict, AdapterFailure> {
        let system = self
            .prompts
            .get(PromptRole::Evaluation)
            .replace("{threshold}", req.threshold.as_str());
        let mut user = format!("# Task ({})\n{}\n\n# Files\n", req.task_kind, req.task);
        for path in req.artifacts {
            user.push_str(&describe_file(path)?);
        }
        let reply = self.client.complete(&[ChatMessage::system(system), ChatMessage::user(user)])?;
        let verdict: EvalVerdict = fenced_json(&reply, "evaluator")?;
        Ok(verdict.normalized())
    }
}

fn describe_file(path: &Path) -> Result<String, AdapterFailure> {
    let meta = std::fs::metadata(path).map_err(|e| {
        AdapterFailure::new(
            AdapterFailureKind::MissingArtifact,
            format!("cannot read {}: {e}", path.display()),
        )
    })?;
    let kind = ArtifactKind::from_path(path);
    let mut out = format!("- {} ({}, {} bytes)\n", path.display(), kind.as_str(), meta.len());
    if kind == ArtifactKind::Image && meta.len() <= INLINE_IMAGE_LIMIT {
        if let Ok(bytes) = std::fs::read(path) {
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("png");
            out.push_str(&format!(
                "  data:image/{ext};base64,{}\n",
                base64::engine::general_purpose::STANDARD.encode(bytes)
            ));
        }
    }
    Ok(out)
}

pub struct ChatAnnotator {
    client: ChatClient,
    prompts: PromptSet,
}

impl ChatAnnotator {
    pub fn new(client: ChatClient, prompts: PromptSet) -> Self {
        ChatAnnotator { client, prompts }
    }
}

#[derive(Deserialize)]
struct AnnotationReply {
    summary: String,
    #[serde(default)]
    details: String,
    #[serde(default)]
    scene_traits: Vec<String>,
}

impl Annotator for ChatAnnotator {
    fn annotate(&self, artifact: &Path) -> Result<Annotation, AdapterFailure> {
        let user = describe_file(artifact)?;
        let reply = self.client.complete(&[
            ChatMessage::system(self.prompts.get(PromptRole::WorkspaceUpdate)),
            ChatMessage::user(user),
        ])?;
        let parsed: AnnotationReply = fenced_json(&reply, "annotator")?;
        Ok(Annotation {
            artifact_ref: artifact.to_path_buf(),
            summary: parsed.summary,
            details: parsed.details,
            scene_traits: parsed.scene_traits,
        })
    }
}

pub struct ChatPreprocessor {
    client: ChatClient,
    prompts: PromptSet,
}

impl ChatPreprocessor {
    pub fn new(client: ChatClient, prompts: PromptSet) -> Self {
        ChatPreprocessor { client, prompts }
    }
}

impl Preprocessor for ChatPreprocessor {
    /// The instruction stays a verbatim prefix of the result.
    fn preprocess(&self, instruction: &str) -> Result<String, AdapterFailure> {
        let reply = self.client.complete(&[
            ChatMessage::system(self.prompts.get(PromptRole::Preprocess)),
            ChatMessage::user(instruction),
        ])?;
        let expansion = reply.trim();
        let expansion = expansion.strip_prefix(instruction).unwrap_or(expansion).trim();
        if expansion.is_empty() {
            return Ok(instruction.to_string());
        }
        Ok(format!("{instruction}\n\n{expansion}"))
    }
}
