//! Deterministic stand-ins for every role.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde_json::Value;

use super::{
    AdapterFailure, AdapterFailureKind, Annotator, EvalRequest, EvalVerdict, Evaluator, PlanRequest, Planner,
    PlannerProposal, Preprocessor,
};
use crate::backend::read_sim_payload;
use crate::swi::SwiCall;
use crate::util::{fingerprint, mix_seed};
use crate::workspace::{Annotation, ArtifactKind, Workspace};

/// Replaces `{task}`, `{last}` and `{input}` inside string arguments.
pub(crate) fn fill_call(call: &SwiCall, ws: &Workspace) -> SwiCall {
    let last = ws.latest_artifact().map(|a| a.path.display().to_string());
    let input = ws
        .artifacts()
        .find(|a| a.origin.plan_node.is_none())
        .map(|a| a.path.display().to_string());
    let mut out = call.clone();
    for v in out.arguments.values_mut() {
        if let Value::String(s) = v {
            let mut t = s.replace("{task}", &ws.instruction);
            if let Some(l) = &last {
                t = t.replace("{last}", l);
            }
            if let Some(i) = &input {
                t = t.replace("{input}", i);
            }
            *s = t;
        }
    }
    out
}

fn fill_proposal(p: PlannerProposal, ws: &Workspace) -> PlannerProposal {
    match p {
        PlannerProposal::Chain { calls, rationale } => PlannerProposal::Chain {
            calls: calls.iter().map(|c| fill_call(c, ws)).collect(),
            rationale,
        },
        t => t,
    }
}

/// Returns queued proposals in order, then terminates.
pub struct ScriptedPlanner {
    queue: Mutex<VecDeque<PlannerProposal>>,
}

impl ScriptedPlanner {
    pub fn new(script: impl IntoIterator<Item = PlannerProposal>) -> Self {
        ScriptedPlanner {
            queue: Mutex::new(script.into_iter().collect()),
        }
    }
}

impl Planner for ScriptedPlanner {
    fn propose(&self, req: &PlanRequest<'_>) -> Result<PlannerProposal, AdapterFailure> {
        let next = self.queue.lock().expect("planner queue lock").pop_front();
        Ok(fill_proposal(next.unwrap_or_else(PlannerProposal::terminate), req.workspace))
    }
}

/// Proposes `candidates[feedback.len() % n]`, so each retry at a node moves
/// to a new candidate. Terminates once `depth >= steps`.
pub struct CyclingPlanner {
    candidates: Vec<SwiCall>,
    steps: usize,
}

impl CyclingPlanner {
    pub fn new(candidates: Vec<SwiCall>, steps: usize) -> Self {
        assert!(!candidates.is_empty(), "cycling planner needs candidates");
        CyclingPlanner { candidates, steps }
    }
}

impl Planner for CyclingPlanner {
    fn propose(&self, req: &PlanRequest<'_>) -> Result<PlannerProposal, AdapterFailure> {
        if req.depth >= self.steps {
            return Ok(PlannerProposal::terminate());
        }
        let n = self.candidates.len();
        let first = req.feedback.len() % n;
        let calls = (0..n).map(|i| fill_call(&self.candidates[(first + i) % n], req.workspace)).collect();
        Ok(PlannerProposal::chain(calls))
    }
}

/// Walks a fixed multi-step plan. At depth `d` it proposes the whole
/// remaining plan `steps[d..]`; retries rotate through the alternatives of
/// step `d`.
pub struct SequencePlanner {
    steps: Vec<Vec<SwiCall>>,
}

impl SequencePlanner {
    pub fn new(steps: Vec<Vec<SwiCall>>) -> Self {
        assert!(steps.iter().all(|s| !s.is_empty()), "every step needs a call");
        SequencePlanner { steps }
    }

    pub fn linear(calls: Vec<SwiCall>) -> Self {
        Self::new(calls.into_iter().map(|c| vec![c]).collect())
    }
}

impl Planner for SequencePlanner {
    fn propose(&self, req: &PlanRequest<'_>) -> Result<PlannerProposal, AdapterFailure> {
        let Some(current) = self.steps.get(req.depth) else {
            return Ok(PlannerProposal::terminate());
        };
        let head = &current[req.feedback.len() % current.len()];
        let calls = std::iter::once(head)
            .chain(self.steps[req.depth + 1..].iter().map(|alts| &alts[0]))
            .map(|c| fill_call(c, req.workspace))
            .collect();
        Ok(PlannerProposal::chain(calls))
    }
}

/// Never terminates: always proposes a long chain picked by a hash of the
/// node and attempt.
pub struct AdversarialPlanner {
    candidates: Vec<SwiCall>,
    chain_len: usize,
}

impl AdversarialPlanner {
    pub fn new(candidates: Vec<SwiCall>, chain_len: usize) -> Self {
        assert!(!candidates.is_empty() && chain_len > 0);
        AdversarialPlanner { candidates, chain_len }
    }
}

impl Planner for AdversarialPlanner {
    fn propose(&self, req: &PlanRequest<'_>) -> Result<PlannerProposal, AdapterFailure> {
        let h = mix_seed(&[&req.node.to_le_bytes(), &(req.attempt as u64).to_le_bytes()]) as usize;
        let n = self.candidates.len();
        let calls = (0..self.chain_len)
            .map(|i| fill_call(&self.candidates[(h + i) % n], req.workspace))
            .collect();
        Ok(PlannerProposal::chain(calls))
    }
}

pub struct IdentityPreprocessor;

impl Preprocessor for IdentityPreprocessor {
    fn preprocess(&self, instruction: &str) -> Result<String, AdapterFailure> {
        Ok(instruction.to_string())
    }
}

/// Appends a fixed expansion after the instruction.
pub struct AppendingPreprocessor {
    pub suffix: String,
}

impl Preprocessor for AppendingPreprocessor {
    fn preprocess(&self, instruction: &str) -> Result<String, AdapterFailure> {
        Ok(format!("{instruction}\n\n{}", self.suffix))
    }
}

pub struct FailingPreprocessor;

impl Preprocessor for FailingPreprocessor {
    fn preprocess(&self, _: &str) -> Result<String, AdapterFailure> {
        Err(AdapterFailure::new(AdapterFailureKind::Transport, "preprocessor unavailable"))
    }
}

/// Summarizes an artifact by the SHA-256 of its bytes.
pub struct DigestAnnotator;

impl Annotator for DigestAnnotator {
    fn annotate(&self, artifact: &Path) -> Result<Annotation, AdapterFailure> {
        let bytes = std::fs::read(artifact).map_err(|e| {
            AdapterFailure::new(
                AdapterFailureKind::MissingArtifact,
                format!("cannot read {}: {e}", artifact.display()),
            )
        })?;
        let mut scene_traits = Vec::new();
        if let Some(p) = read_sim_payload(artifact) {
            scene_traits.push(format!("workflow:{}", p.workflow));
            scene_traits.push(format!("quality:{:.3}", p.quality));
        }
        Ok(Annotation {
            artifact_ref: artifact.to_path_buf(),
            summary: format!("sha256:{}", fingerprint(&bytes)),
            details: format!("{} bytes, {}", bytes.len(), ArtifactKind::from_path(artifact).as_str()),
            scene_traits,
        })
    }
}

/// Passes exactly the artifacts whose fingerprint is in the pass set.
pub struct FingerprintEvaluator {
    pass_set: BTreeSet<String>,
}

impl FingerprintEvaluator {
    pub fn new(pass_set: impl IntoIterator<Item = String>) -> Self {
        FingerprintEvaluator {
            pass_set: pass_set.into_iter().collect(),
        }
    }
}

impl Evaluator for FingerprintEvaluator {
    fn evaluate(&self, req: &EvalRequest<'_>) -> Result<EvalVerdict, AdapterFailure> {
        for path in req.artifacts {
            let bytes = std::fs::read(path).map_err(|e| {
                AdapterFailure::new(
                    AdapterFailureKind::MissingArtifact,
                    format!("cannot read {}: {e}", path.display()),
                )
            })?;
            let fp = fingerprint(&bytes);
            if !self.pass_set.contains(&fp) {
                return Ok(EvalVerdict::failed(format!(
                    "artifact {} (sha256:{}) is not an accepted result",
                    path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
                    &fp[..12]
                )));
            }
        }
        Ok(EvalVerdict::passed())
    }
}

/// Scores simulator artifacts by their embedded quality against the
/// threshold cutoff. The lowest-quality artifact decides.
pub struct QualityEvaluator;

impl Evaluator for QualityEvaluator {
    fn evaluate(&self, req: &EvalRequest<'_>) -> Result<EvalVerdict, AdapterFailure> {
        let mut worst: Option<(f64, String)> = None;
        for path in req.artifacts {
            if !path.exists() {
                return Err(AdapterFailure::new(
                    AdapterFailureKind::MissingArtifact,
                    format!("artifact {} does not exist", path.display()),
                ));
            }
            let Some(p) = read_sim_payload(path) else {
                return Ok(EvalVerdict::failed(format!(
                    "artifact {} carries no quality score",
                    path.display()
                )));
            };
            if worst.as_ref().is_none_or(|(q, _)| p.quality < *q) {
                worst = Some((p.quality, p.workflow));
            }
        }
        let Some((q, workflow)) = worst else {
            return Ok(EvalVerdict::failed("no artifact to evaluate"));
        };
        let cutoff = req.threshold.cutoff();
        let verdict = if q >= cutoff {
            EvalVerdict::passed()
        } else {
            EvalVerdict::failed(format!(
                "{workflow} output rejected: quality {q:.3} below the {} cutoff {cutoff:.2} for {}",
                req.threshold, req.task_kind
            ))
        };
        Ok(verdict
            .with_dimension("generation-quality", q)
            .with_dimension("instruction-adherence", q))
    }
}

/// Passes every non-empty artifact list.
pub struct AcceptingEvaluator;

impl Evaluator for AcceptingEvaluator {
    fn evaluate(&self, req: &EvalRequest<'_>) -> Result<EvalVerdict, AdapterFailure> {
        if req.artifacts.is_empty() {
            return Ok(EvalVerdict::failed("no artifact to evaluate"));
        }
        Ok(EvalVerdict::passed())
    }
}

/// Returns queued verdicts in order, then defers to a fallback evaluator.
pub struct ScriptedEvaluator {
    queue: Mutex<VecDeque<EvalVerdict>>,
    fallback: Arc<dyn Evaluator>,
}

impl ScriptedEvaluator {
    pub fn new(verdicts: impl IntoIterator<Item = EvalVerdict>, fallback: Arc<dyn Evaluator>) -> Self {
        ScriptedEvaluator {
            queue: Mutex::new(verdicts.into_iter().map(EvalVerdict::normalized).collect()),
            fallback,
        }
    }
}

impl Evaluator for ScriptedEvaluator {
    fn evaluate(&self, req: &EvalRequest<'_>) -> Result<EvalVerdict, AdapterFailure> {
        let next = self.queue.lock().expect("evaluator queue lock").pop_front();
        match next {
            Some(v) => Ok(v),
            None => self.fallback.evaluate(req),
        }
    }
}
