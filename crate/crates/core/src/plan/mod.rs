//! Search-tree planning with level-confined feedback.
//!
//! Nodes are sub-task planning states and edges are executed library calls.
//! A node asks the planner for a chain of calls and runs only its head; the
//! child node then re-plans from the updated workspace. Failures are retried
//! at the same node with the failure analysis in context; a node that runs
//! out of attempts reports upward to its parent and nowhere else.

mod engine;
mod trace;

pub use engine::{handle_result, preprocess, run_task, EngineError, PlanSession, Step, TaskSpec};

pub use trace::{EventKind, RunTrace, TraceEvent};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::{AdapterFailure, EvalVerdict, Threshold};
use crate::backend::{ExecutionOutcome, DEFAULT_JOB_TIMEOUT};
use crate::swi::SwiCall;
use crate::workspace::Snapshot;

/// Control-flow variant of the engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Tree search with failure analyses kept at the failing level.
    #[default]
    Full,
    /// Any failure discards the whole path and re-plans from a fresh root
    /// that only knows the most recent failure.
    NoTree,
    /// Tree search, but retries see only that earlier attempts failed.
    NoFeedback,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Full, Policy::NoTree, Policy::NoFeedback];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Full => "full",
            Policy::NoTree => "no-tree",
            Policy::NoFeedback => "no-feedback",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy {s:?} (full|no-tree|no-feedback)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub max_depth: usize,
    pub max_children_per_node: usize,
    pub max_total_expansions: usize,
    pub evaluation_threshold: Threshold,
    /// Run the evaluator on every edge, not only at termination.
    pub evaluate_intermediate: bool,
    #[serde(with = "secs")]
    pub job_timeout: Duration,
    /// Planner call cap; derived from the other bounds when unset.
    pub max_planner_calls: Option<usize>,
    pub policy: Policy,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Duration::try_from_secs_f64(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            max_depth: 6,
            max_children_per_node: 3,
            max_total_expansions: 24,
            evaluation_threshold: Threshold::Normal,
            evaluate_intermediate: false,
            job_timeout: DEFAULT_JOB_TIMEOUT,
            max_planner_calls: None,
            policy: Policy::Full,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("max_depth", self.max_depth),
            ("max_children_per_node", self.max_children_per_node),
            ("max_total_expansions", self.max_total_expansions),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        if self.max_planner_calls == Some(0) {
            return Err("max_planner_calls must be at least 1".into());
        }
        Ok(())
    }

    pub fn planner_call_cap(&self) -> usize {
        self.max_planner_calls
            .unwrap_or((self.max_total_expansions + 1) * (self.max_children_per_node + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStatus {
    Open,
    Expanded,
    Succeeded,
    FailedExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttemptOutcome {
    Executed(ExecutionOutcome),
    AdapterFailure(AdapterFailure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// `None` when the planner produced no usable call.
    pub call: Option<SwiCall>,
    /// Recorded, never executed.
    pub chain_tail: Vec<SwiCall>,
    pub outcome: AttemptOutcome,
    pub verdict: Option<EvalVerdict>,
    pub child: Option<u64>,
    pub feedback: Option<String>,
}

impl AttemptRecord {
    pub fn executed(&self) -> Option<&ExecutionOutcome> {
        match &self.outcome {
            AttemptOutcome::Executed(o) => Some(o),
            AttemptOutcome::AdapterFailure(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub id: u64,
    /// Node whose failure produced the entry.
    pub origin: u64,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct PlanNode {
    pub id: u64,
    pub parent: Option<u64>,
    /// Index of the parent's attempt that created this node.
    pub via_attempt: Option<usize>,
    pub depth: usize,
    pub workspace: Snapshot,
    pub proposed_chain: Vec<SwiCall>,
    pub attempts: Vec<AttemptRecord>,
    pub feedback: Vec<FeedbackEntry>,
    pub status: NodeStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextAction {
    Descend,
    RetrySameLevel,
    PropagateUp,
    TerminateSuccess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskStatus {
    Resolved,
    UnresolvedExhausted,
    UnresolvedBudget,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Resolved => "resolved",
            TaskStatus::UnresolvedExhausted => "unresolved-exhausted",
            TaskStatus::UnresolvedBudget => "unresolved-budget",
        }
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct TaskResult {
    pub status: TaskStatus,
    pub final_artifacts: Vec<PathBuf>,
    pub trace: RunTrace,
    /// Executed calls; each is exactly one backend job.
    pub expansions: usize,
    pub jobs: usize,
    pub planner_calls: usize,
    /// Graphs rejected by concrete validation before submission.
    pub structural_failures: usize,
    pub nodes: Vec<PlanNode>,
    pub workspace: Snapshot,
    pub run_dir: PathBuf,
    pub trace_path: PathBuf,
    pub workspace_path: PathBuf,
    pub duration: Duration,
}
