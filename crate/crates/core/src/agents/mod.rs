//! Contracts for the planner, annotator, evaluator and preprocessor roles.

mod chat;
mod mocks;
mod prompts;
mod scenario;

pub use chat::{
    extract_fenced_block, parse_proposal, ChatAnnotator, ChatClient, ChatConfig, ChatEvaluator, ChatMessage,
    ChatPlanner, ChatPreprocessor,
};
pub use mocks::{
    AcceptingEvaluator, AdversarialPlanner, AppendingPreprocessor, CyclingPlanner, DigestAnnotator, FailingPreprocessor,
    FingerprintEvaluator, IdentityPreprocessor, QualityEvaluator, ScriptedEvaluator, ScriptedPlanner,
    SequencePlanner,
};
pub use prompts::{PromptRole, PromptSet};
pub use scenario::{MockScenario, ScenarioError};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::swi::{SwiCall, TaskKind};
use crate::workspace::{Annotation, Workspace};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    Strict,
    #[default]
    Normal,
    Lenient,
}

impl Threshold {
    /// Minimum quality score that passes.
    pub fn cutoff(self) -> f64 {
        match self {
            Threshold::Strict => 0.8,
            Threshold::Normal => 0.6,
            Threshold::Lenient => 0.4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Threshold::Strict => "strict",
            Threshold::Normal => "normal",
            Threshold::Lenient => "lenient",
        }
    }
}

impl FromStr for Threshold {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Threshold::Strict),
            "normal" => Ok(Threshold::Normal),
            "lenient" => Ok(Threshold::Lenient),
            other => Err(format!("unknown threshold {other:?} (strict|normal|lenient)")),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdapterFailureKind {
    Transport,
    Unparseable,
    UnknownWorkflow,
    Instantiation,
    Adaptation,
    Structural,
    MissingArtifact,
    Internal,
}

impl AdapterFailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdapterFailureKind::Transport => "transport",
            AdapterFailureKind::Unparseable => "unparseable",
            AdapterFailureKind::UnknownWorkflow => "unknown-workflow",
            AdapterFailureKind::Instantiation => "instantiation",
            AdapterFailureKind::Adaptation => "adaptation",
            AdapterFailureKind::Structural => "structural",
            AdapterFailureKind::MissingArtifact => "missing-artifact",
            AdapterFailureKind::Internal => "internal",
        }
    }
}

/// A role could not produce a usable answer. Recorded as a failed attempt,
/// never raised out of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{message}")]
pub struct AdapterFailure {
    pub kind: AdapterFailureKind,
    pub message: String,
    /// Unparsed model output, when there was one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

impl AdapterFailure {
    pub fn new(kind: AdapterFailureKind, message: impl Into<String>) -> Self {
        AdapterFailure {
            kind,
            message: message.into(),
            raw: None,
        }
    }

    pub fn with_raw(mut self, raw: impl Into<String>) -> Self {
        self.raw = Some(raw.into());
        self
    }

    pub fn unknown_workflow(name: &str) -> Self {
        Self::new(AdapterFailureKind::UnknownWorkflow, format!("unknown workflow {name:?}"))
    }

    /// Text delivered as planner feedback.
    pub fn feedback_text(&self) -> String {
        match &self.raw {
            Some(raw) => format!("{} (raw reply: {})", self.message, crate::util::truncate_chars(raw, 400)),
            None => self.message.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProposalDoc", into = "ProposalDoc")]
pub enum PlannerProposal {
    /// Only the head is executed; the tail is advisory.
    Chain { calls: Vec<SwiCall>, rationale: String },
    Terminate { rationale: String },
}

impl PlannerProposal {
    pub fn chain(calls: Vec<SwiCall>) -> Self {
        PlannerProposal::Chain {
            calls,
            rationale: String::new(),
        }
    }

    pub fn single(call: SwiCall) -> Self {
        Self::chain(vec![call])
    }

    pub fn terminate() -> Self {
        PlannerProposal::Terminate {
            rationale: String::new(),
        }
    }

    pub fn rationale(&self) -> &str {
        match self {
            PlannerProposal::Chain { rationale, .. } | PlannerProposal::Terminate { rationale } => rationale,
        }
    }
}

/// Wire shapes accepted for a proposal: a bare call, `{"chain": [...]}` or
/// `{"terminate": true}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ProposalDoc {
    Terminate {
        terminate: bool,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        rationale: String,
    },
    Chain {
        chain: Vec<SwiCall>,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        rationale: String,
    },
    Call(SwiCall),
}

impl TryFrom<ProposalDoc> for PlannerProposal {
    type Error = String;
    fn try_from(doc: ProposalDoc) -> Result<Self, String> {
        match doc {
            ProposalDoc::Terminate { terminate: true, rationale } => Ok(PlannerProposal::Terminate { rationale }),
            ProposalDoc::Terminate { terminate: false, .. } => Err("terminate: false carries no chain".into()),
            ProposalDoc::Chain { chain, .. } if chain.is_empty() => Err("empty chain".into()),
            ProposalDoc::Chain { chain, rationale } => Ok(PlannerProposal::Chain { calls: chain, rationale }),
            ProposalDoc::Call(call) => Ok(PlannerProposal::single(call)),
        }
    }
}

impl From<PlannerProposal> for ProposalDoc {
    fn from(p: PlannerProposal) -> Self {
        match p {
            PlannerProposal::Chain { calls, rationale } => ProposalDoc::Chain { chain: calls, rationale },
            PlannerProposal::Terminate { rationale } => ProposalDoc::Terminate {
                terminate: true,
                rationale,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalVerdict {
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_analysis: Option<String>,
    #[serde(default)]
    pub dimensions: BTreeMap<String, f64>,
}

impl EvalVerdict {
    pub fn passed() -> Self {
        EvalVerdict {
            pass: true,
            failure_analysis: None,
            dimensions: BTreeMap::new(),
        }
    }

    pub fn failed(analysis: impl Into<String>) -> Self {
        let mut analysis = analysis.into();
        if analysis.trim().is_empty() {
            analysis = "evaluation failed without analysis".into();
        }
        EvalVerdict {
            pass: false,
            failure_analysis: Some(analysis),
            dimensions: BTreeMap::new(),
        }
    }

    pub fn with_dimension(mut self, key: impl Into<String>, score: f64) -> Self {
        self.dimensions.insert(key.into(), score.clamp(0.0, 1.0));
        self
    }

    /// Restores the invariant that a failing verdict carries an analysis.
    pub fn normalized(self) -> Self {
        match (self.pass, &self.failure_analysis) {
            (false, None) => EvalVerdict {
                failure_analysis: Some("evaluation failed without analysis".into()),
                ..self
            },
            (false, Some(a)) if a.trim().is_empty() => EvalVerdict {
                failure_analysis: Some("evaluation failed without analysis".into()),
                ..self
            },
            _ => self,
        }
    }
}

/// What a planner sees at one node.
#[derive(Debug, Clone, Copy)]
pub struct PlanRequest<'a> {
    pub workspace: &'a Workspace,
    pub library_context: &'a str,
    pub feedback: &'a [String],
    pub node: u64,
    pub depth: usize,
    /// Attempts already recorded at this node.
    pub attempt: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub task: &'a str,
    pub artifacts: &'a [PathBuf],
    pub task_kind: TaskKind,
    pub threshold: Threshold,
}

pub trait Planner: Send + Sync {
    fn propose(&self, req: &PlanRequest<'_>) -> Result<PlannerProposal, AdapterFailure>;
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, req: &EvalRequest<'_>) -> Result<EvalVerdict, AdapterFailure>;
}

pub trait Annotator: Send + Sync {
    fn annotate(&self, artifact: &Path) -> Result<Annotation, AdapterFailure>;
}

pub trait Preprocessor: Send + Sync {
    fn preprocess(&self, instruction: &str) -> Result<String, AdapterFailure>;
}

#[derive(Clone)]
pub struct AgentBundle {
    pub planner: Arc<dyn Planner>,
    pub annotator: Arc<dyn Annotator>,
    pub evaluator: Arc<dyn Evaluator>,
    pub preprocessor: Arc<dyn Preprocessor>,
}

impl AgentBundle {
    pub fn new(
        planner: Arc<dyn Planner>,
        annotator: Arc<dyn Annotator>,
        evaluator: Arc<dyn Evaluator>,
        preprocessor: Arc<dyn Preprocessor>,
    ) -> Self {
        AgentBundle {
            planner,
            annotator,
            evaluator,
            preprocessor,
        }
    }

    /// `planner` with the deterministic mock annotator, quality evaluator
    /// and identity preprocessor.
    pub fn with_planner(planner: impl Planner + 'static) -> Self {
        AgentBundle {
            planner: Arc::new(planner),
            annotator: Arc::new(DigestAnnotator),
            evaluator: Arc::new(QualityEvaluator),
            preprocessor: Arc::new(IdentityPreprocessor),
        }
    }

    pub fn evaluator(mut self, evaluator: impl Evaluator + 'static) -> Self {
        self.evaluator = Arc::new(evaluator);
        self
    }

    pub fn annotator(mut self, annotator: impl Annotator + 'static) -> Self {
        self.annotator = Arc::new(annotator);
        self
    }

    pub fn preprocessor(mut self, preprocessor: impl Preprocessor + 'static) -> Self {
        self.preprocessor = Arc::new(preprocessor);
        self
    }
}
