//! Executing concrete workflows.

mod remote;
mod sim;
pub mod stub;

pub use remote::{RemoteBackend, WsSession};
pub use sim::{is_output_node, read_sim_payload, SimPayload, SimProfile, Simulator, WorkflowProfile};

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::{NodeId, WorkflowGraph};

pub const DEFAULT_JOB_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeStatus {
    Completed,
    Failed,
    TimedOut,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeStatus::Completed => "completed",
            OutcomeStatus::Failed => "failed",
            OutcomeStatus::TimedOut => "timed-out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProducedArtifact {
    pub node: NodeId,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: OutcomeStatus,
    pub artifacts: Vec<ProducedArtifact>,
    pub diagnostics: String,
    #[serde(with = "secs_f64")]
    pub duration: Duration,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExecutionOutcome {
    pub fn completed(artifacts: Vec<ProducedArtifact>, duration: Duration) -> Self {
        ExecutionOutcome {
            status: OutcomeStatus::Completed,
            artifacts,
            diagnostics: String::new(),
            duration,
            warnings: Vec::new(),
        }
    }

    pub fn failed(diagnostics: impl Into<String>, duration: Duration) -> Self {
        Self::unsuccessful(OutcomeStatus::Failed, diagnostics, duration)
    }

    pub fn timed_out(diagnostics: impl Into<String>, duration: Duration) -> Self {
        Self::unsuccessful(OutcomeStatus::TimedOut, diagnostics, duration)
    }

    fn unsuccessful(status: OutcomeStatus, diagnostics: impl Into<String>, duration: Duration) -> Self {
        let mut diagnostics = diagnostics.into();
        if diagnostics.trim().is_empty() {
            diagnostics = format!("job {}", status.as_str());
        }
        ExecutionOutcome {
            status,
            artifacts: Vec::new(),
            diagnostics,
            duration,
            warnings: Vec::new(),
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == OutcomeStatus::Completed
    }
}

mod secs_f64 {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobHandle {
    pub job_id: String,
    pub submitted_at: SystemTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProgressEvent {
    Executing { node: Option<NodeId> },
    Progress { node: Option<NodeId>, value: u64, max: u64 },
    Executed { node: NodeId },
    Other { kind: String, data: Value },
}

/// Where a job writes its artifacts.
#[derive(Debug, Clone, Copy)]
pub struct ExecContext<'a> {
    pub artifact_dir: &'a Path,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unreachable at {url}: {detail}")]
    Unreachable { url: String, detail: String },
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Runs one concrete graph. Faults of the job itself are reported in the
    /// outcome, never as a panic or error.
    fn execute(&self, graph: &WorkflowGraph, ctx: ExecContext<'_>) -> ExecutionOutcome;

    /// Infrastructure probe run once before a task starts.
    fn ensure_reachable(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

/// Picks a file extension for an artifact produced by `class_type`.
pub(crate) fn artifact_extension(class_type: &str) -> &'static str {
    let c = class_type.to_ascii_lowercase();
    if c.contains("video") || c.contains("animated") {
        "mp4"
    } else {
        "png"
    }
}
