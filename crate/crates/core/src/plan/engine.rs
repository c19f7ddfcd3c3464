use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use super::{
    AttemptOutcome, AttemptRecord, EventKind, FeedbackEntry, NextAction, NodeStatus, PlanConfig, PlanNode, Policy,
    RunTrace, TaskResult, TaskStatus,
};
use crate::agents::{
    AdapterFailure, AdapterFailureKind, AgentBundle, EvalRequest, EvalVerdict, PlanRequest, PlannerProposal,
};
use crate::backend::{Backend, BackendError, ExecContext, ExecutionOutcome};
use crate::graph::{validate_dag, WorkflowGraph};
use crate::swi::{adapt_parameters, instantiate, Library, SwiCall, TaskKind};
use crate::workspace::{Annotation, ArtifactOrigin, Snapshot, Workspace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub instruction: String,
    pub inputs: Vec<PathBuf>,
}

impl TaskSpec {
    pub fn new(instruction: impl Into<String>) -> Self {
        TaskSpec {
            instruction: instruction.into(),
            inputs: Vec::new(),
        }
    }

    pub fn with_inputs(mut self, inputs: Vec<PathBuf>) -> Self {
        self.inputs = inputs;
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    BackendUnreachable(#[from] BackendError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl EngineError {
    fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        EngineError::Io {
            context: context.into(),
            source,
        }
    }
}

/// Result of one engine step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Continue planning at this node.
    Continue(u64),
    Done(TaskStatus),
}

/// Decides what follows a verdict on the edge most recently recorded at
/// `node`. `terminated` is set when the verdict comes from a termination
/// check rather than an intermediate one.
pub fn handle_result(node: &PlanNode, verdict: &EvalVerdict, terminated: bool, config: &PlanConfig) -> NextAction {
    if verdict.pass {
        if terminated {
            NextAction::TerminateSuccess
        } else {
            NextAction::Descend
        }
    } else if node.attempts.len() < config.max_children_per_node {
        NextAction::RetrySameLevel
    } else {
        NextAction::PropagateUp
    }
}

/// Runs the preprocessor, falling back to the raw instruction (with a trace
/// warning) when it fails.
pub fn preprocess(instruction: &str, agents: &AgentBundle, trace: &mut RunTrace) -> String {
    match agents.preprocessor.preprocess(instruction) {
        Ok(s) if !s.trim().is_empty() => s,
        Ok(_) => {
            trace.push(
                EventKind::Warning,
                None,
                json!({"text": "preprocessor returned nothing; using the raw instruction"}),
            );
            instruction.to_string()
        }
        Err(e) => {
            trace.push(
                EventKind::Warning,
                None,
                json!({"text": format!("preprocessor failed: {e}; using the raw instruction")}),
            );
            instruction.to_string()
        }
    }
}

/// Plans and executes `task` until it resolves or a bound is hit. Writes
/// `artifacts/`, `trace.ndjson` and `workspace.json` under `run_dir`.
pub fn run_task(
    task: &TaskSpec,
    library: &Library,
    agents: &AgentBundle,
    backend: &dyn Backend,
    config: &PlanConfig,
    run_dir: &Path,
) -> Result<TaskResult, EngineError> {
    PlanSession::new(task, library, agents, backend, config, run_dir)?.run()
}

pub struct PlanSession<'a> {
    library: &'a Library,
    agents: &'a AgentBundle,
    backend: &'a dyn Backend,
    config: PlanConfig,
    run_dir: PathBuf,
    artifact_dir: PathBuf,
    library_context: String,
    initial: Snapshot,
    nodes: Vec<PlanNode>,
    trace: RunTrace,
    expansions: usize,
    jobs: usize,
    planner_calls: usize,
    structural_failures: usize,
    next_feedback: u64,
    last_failure: Option<FeedbackEntry>,
    final_artifacts: Vec<PathBuf>,
    final_node: Option<u64>,
    started: Instant,
}

impl<'a> PlanSession<'a> {
    /// Probes the backend, preprocesses the instruction and opens the root.
    pub fn new(
        task: &TaskSpec,
        library: &'a Library,
        agents: &'a AgentBundle,
        backend: &'a dyn Backend,
        config: &PlanConfig,
        run_dir: &Path,
    ) -> Result<Self, EngineError> {
        let started = Instant::now();
        config.validate().map_err(EngineError::Config)?;
        backend.ensure_reachable()?;
        let artifact_dir = run_dir.join("artifacts");
        std::fs::create_dir_all(&artifact_dir)
            .map_err(|e| EngineError::io(format!("cannot create {}", artifact_dir.display()), e))?;

        let mut trace = RunTrace::default();
        let enriched = preprocess(&task.instruction, agents, &mut trace);
        let mut ws = Workspace::new(task.instruction.clone()).with_display_root(run_dir);
        ws.enriched_spec = enriched;
        ws.add_inputs(&task.inputs).map_err(|e| EngineError::Input(e.to_string()))?;

        let mut session = PlanSession {
            library,
            agents,
            backend,
            config: config.clone(),
            run_dir: run_dir.to_path_buf(),
            artifact_dir,
            library_context: library.render_context(),
            initial: ws.snapshot(),
            nodes: Vec::new(),
            trace,
            expansions: 0,
            jobs: 0,
            planner_calls: 0,
            structural_failures: 0,
            next_feedback: 0,
            last_failure: None,
            final_artifacts: Vec::new(),
            final_node: None,
            started,
        };
        let initial = session.initial.clone();
        session.open_node(None, None, initial);
        Ok(session)
    }

    pub fn root(&self) -> u64 {
        0
    }

    pub fn node(&self, id: u64) -> &PlanNode {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn expansions(&self) -> usize {
        self.expansions
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }

    pub fn run(mut self) -> Result<TaskResult, EngineError> {
        let root = self.root();
        let status = if self.library.is_empty() {
            let idx = self.push_attempt(
                root,
                None,
                Vec::new(),
                AttemptOutcome::AdapterFailure(AdapterFailure::new(
                    AdapterFailureKind::UnknownWorkflow,
                    "no applicable workflow",
                )),
            );
            self.record_feedback(root, root, idx, "no applicable workflow".into());
            self.nodes[root as usize].status = NodeStatus::FailedExhausted;
            TaskStatus::UnresolvedExhausted
        } else {
            let mut current = root;
            loop {
                match self.step(current) {
                    Step::Continue(next) => current = next,
                    Step::Done(status) => break status,
                }
            }
        };
        self.finish(status)
    }

    /// One planner call at `node` and whatever it leads to.
    pub fn step(&mut self, node: u64) -> Step {
        if self.planner_calls >= self.config.planner_call_cap() {
            return Step::Done(TaskStatus::UnresolvedBudget);
        }
        let (texts, ids) = self.feedback_view(node);
        let proposal = {
            let n = &self.nodes[node as usize];
            let req = PlanRequest {
                workspace: &n.workspace,
                library_context: &self.library_context,
                feedback: &texts,
                node,
                depth: n.depth,
                attempt: n.attempts.len(),
            };
            self.agents.planner.propose(&req)
        };
        self.planner_calls += 1;
        match proposal {
            Err(failure) => {
                self.emit(
                    EventKind::CallProposed,
                    Some(node),
                    json!({"kind": "invalid", "error": failure.message, "feedback_ids": ids, "feedback": texts}),
                );
                let text = failure.feedback_text();
                let idx = self.push_attempt(node, None, Vec::new(), AttemptOutcome::AdapterFailure(failure));
                self.after_failure(node, idx, text, node)
            }
            Ok(PlannerProposal::Terminate { rationale }) => {
                self.emit(
                    EventKind::CallProposed,
                    Some(node),
                    json!({"kind": "terminate", "rationale": rationale, "feedback_ids": ids, "feedback": texts}),
                );
                self.on_terminate(node)
            }
            Ok(PlannerProposal::Chain { calls, rationale }) => {
                let names: Vec<&str> = calls.iter().map(|c| c.workflow.as_str()).collect();
                self.emit(
                    EventKind::CallProposed,
                    Some(node),
                    json!({
                        "kind": "chain",
                        "chain": names,
                        "head": calls.first(),
                        "rationale": rationale,
                        "feedback_ids": ids,
                        "feedback": texts,
                    }),
                );
                self.expand(node, calls)
            }
        }
    }

    /// Executes only the head of `chain` at `node`; the tail is recorded.
    pub fn expand(&mut self, node: u64, chain: Vec<SwiCall>) -> Step {
        self.nodes[node as usize].proposed_chain = chain.clone();
        let mut calls = chain.into_iter();
        let Some(head) = calls.next() else {
            let failure = AdapterFailure::new(AdapterFailureKind::Unparseable, "planner proposed an empty chain");
            let text = failure.feedback_text();
            let idx = self.push_attempt(node, None, Vec::new(), AttemptOutcome::AdapterFailure(failure));
            return self.after_failure(node, idx, text, node);
        };
        let tail: Vec<SwiCall> = calls.collect();

        if self.nodes[node as usize].depth >= self.config.max_depth {
            let text = format!("depth limit {} reached; no further steps allowed", self.config.max_depth);
            let failure = AdapterFailure::new(AdapterFailureKind::Internal, text.clone());
            let idx = self.push_attempt(node, Some(head), tail, AttemptOutcome::AdapterFailure(failure));
            self.nodes[node as usize].attempts[idx].feedback = Some(text.clone());
            if self.config.policy == Policy::NoTree {
                return self.restart(node, text);
            }
            self.record_feedback(node, node, idx, text);
            return self.propagate_up(node);
        }
        if self.expansions >= self.config.max_total_expansions {
            return Step::Done(TaskStatus::UnresolvedBudget);
        }

        let graph = match self.prepare(node, &head) {
            Ok(g) => g,
            Err(failure) => {
                let text = failure.feedback_text();
                let idx = self.push_attempt(node, Some(head), tail, AttemptOutcome::AdapterFailure(failure));
                return self.after_failure(node, idx, text, node);
            }
        };

        let ctx = ExecContext {
            artifact_dir: &self.artifact_dir,
            timeout: self.config.job_timeout,
        };
        let outcome = self.backend.execute(&graph, ctx);
        self.jobs += 1;
        self.expansions += 1;
        let artifacts: Vec<String> = outcome.artifacts.iter().map(|a| a.path.display().to_string()).collect();
        self.emit(
            EventKind::CallExecuted,
            Some(node),
            json!({
                "workflow": head.workflow,
                "job": self.jobs,
                "status": outcome.status.as_str(),
                "artifacts": artifacts,
                "diagnostics": outcome.diagnostics,
                "unexecuted_tail": tail.len(),
            }),
        );
        for w in &outcome.warnings {
            self.emit(EventKind::Warning, Some(node), json!({"text": w}));
        }
        let workflow = head.workflow.clone();
        let idx = self.push_attempt(node, Some(head), tail, AttemptOutcome::Executed(outcome.clone()));

        if !outcome.is_completed() {
            let text = format!(
                "{workflow}: execution {}: {}",
                outcome.status.as_str(),
                outcome.diagnostics
            );
            return self.after_failure(node, idx, text, node);
        }

        let child_ws = match self.ingest(node, &workflow, &outcome) {
            Ok(ws) => ws,
            Err(text) => return self.after_failure(node, idx, text, node),
        };

        let verdict = if self.config.evaluate_intermediate && !outcome.artifacts.is_empty() {
            let paths: Vec<PathBuf> = outcome.artifacts.iter().map(|a| a.path.clone()).collect();
            self.evaluate(&workflow, &paths)
        } else {
            EvalVerdict::passed()
        };
        self.emit_verdict(node, idx, None, &verdict);
        self.nodes[node as usize].attempts[idx].verdict = Some(verdict.clone());

        match handle_result(&self.nodes[node as usize], &verdict, false, &self.config) {
            NextAction::Descend | NextAction::TerminateSuccess => {
                let child = self.open_node(Some(node), Some(idx), child_ws.snapshot());
                self.nodes[node as usize].attempts[idx].child = Some(child);
                self.nodes[node as usize].status = NodeStatus::Expanded;
                Step::Continue(child)
            }
            NextAction::RetrySameLevel | NextAction::PropagateUp => {
                let analysis = verdict.failure_analysis.unwrap_or_default();
                self.after_failure(node, idx, format!("{workflow}: evaluation failed: {analysis}"), node)
            }
        }
    }

    fn prepare(&mut self, node: u64, call: &SwiCall) -> Result<WorkflowGraph, AdapterFailure> {
        let wf = self
            .library
            .get(&call.workflow)
            .ok_or_else(|| AdapterFailure::unknown_workflow(&call.workflow))?;
        let graph = instantiate(wf, call).map_err(|e| {
            AdapterFailure::new(
                AdapterFailureKind::Instantiation,
                format!("cannot instantiate {}: {e}", call.workflow),
            )
        })?;
        let adapted = adapt_parameters(&graph, &wf.descriptor, &call.constraints).map_err(|e| {
            AdapterFailure::new(AdapterFailureKind::Adaptation, format!("cannot adapt {}: {e}", call.workflow))
        })?;
        for w in &adapted.warnings {
            self.emit(EventKind::Warning, Some(node), json!({"text": format!("{}: {w}", call.workflow)}));
        }
        let report = validate_dag(&adapted.graph, true);
        if !report.is_clean() {
            self.structural_failures += 1;
            let findings: Vec<String> = report.findings.iter().map(|f| f.to_string()).collect();
            return Err(AdapterFailure::new(
                AdapterFailureKind::Structural,
                format!("{} is not a concrete DAG: {}", call.workflow, findings.join("; ")),
            ));
        }
        Ok(adapted.graph)
    }

    fn ingest(&mut self, node: u64, workflow: &str, outcome: &ExecutionOutcome) -> Result<Workspace, String> {
        let mut annotations: Vec<Annotation> = Vec::new();
        for produced in &outcome.artifacts {
            match self.agents.annotator.annotate(&produced.path) {
                Ok(mut a) => {
                    a.artifact_ref = produced.path.clone();
                    annotations.push(a);
                }
                Err(e) => self.emit(
                    EventKind::Warning,
                    Some(node),
                    json!({"text": format!("annotation of {} failed: {e}", produced.path.display())}),
                ),
            }
        }
        let mut ws = Workspace::child_of(&self.nodes[node as usize].workspace);
        let origin = ArtifactOrigin {
            plan_node: Some(node),
            workflow: workflow.to_string(),
        };
        let warnings = ws
            .ingest_outcome(outcome, &annotations, origin)
            .map_err(|e| format!("{workflow}: cannot register outputs: {e}"))?;
        for w in warnings {
            self.emit(EventKind::Warning, Some(node), json!({"text": w}));
        }
        Ok(ws)
    }

    fn evaluate(&self, workflow: &str, artifacts: &[PathBuf]) -> EvalVerdict {
        let task_kind = self
            .library
            .get(workflow)
            .map(|w| w.descriptor.task_kind)
            .unwrap_or(TaskKind::TextToImage);
        let req = EvalRequest {
            task: &self.initial.enriched_spec,
            artifacts,
            task_kind,
            threshold: self.config.evaluation_threshold,
        };
        match self.agents.evaluator.evaluate(&req) {
            Ok(v) => v.normalized(),
            Err(e) => EvalVerdict::failed(format!("evaluator unavailable: {}", e.feedback_text())),
        }
    }

    fn on_terminate(&mut self, node: u64) -> Step {
        let (parent, via) = {
            let n = &self.nodes[node as usize];
            (n.parent, n.via_attempt)
        };
        let (Some(parent), Some(via)) = (parent, via) else {
            let text = "termination requested before any workflow ran".to_string();
            let failure = AdapterFailure::new(AdapterFailureKind::Internal, text.clone());
            let idx = self.push_attempt(node, None, Vec::new(), AttemptOutcome::AdapterFailure(failure));
            return self.after_failure(node, idx, text, node);
        };

        let attempt = &self.nodes[parent as usize].attempts[via];
        let workflow = attempt.call.as_ref().map(|c| c.workflow.clone()).unwrap_or_default();
        let paths: Vec<PathBuf> = attempt
            .executed()
            .map(|o| o.artifacts.iter().map(|a| a.path.clone()).collect())
            .unwrap_or_default();
        let verdict = if paths.is_empty() {
            EvalVerdict::failed("the last step produced no artifact to evaluate")
        } else {
            self.evaluate(&workflow, &paths)
        };
        self.emit_verdict(parent, via, Some(node), &verdict);
        self.nodes[parent as usize].attempts[via].verdict = Some(verdict.clone());

        match handle_result(&self.nodes[parent as usize], &verdict, true, &self.config) {
            NextAction::TerminateSuccess | NextAction::Descend => {
                let mut cur = Some(node);
                while let Some(id) = cur {
                    self.nodes[id as usize].status = NodeStatus::Succeeded;
                    cur = self.nodes[id as usize].parent;
                }
                self.final_artifacts = paths;
                self.final_node = Some(node);
                Step::Done(TaskStatus::Resolved)
            }
            NextAction::RetrySameLevel | NextAction::PropagateUp => {
                let analysis = verdict.failure_analysis.unwrap_or_default();
                let text = format!("{workflow}: final evaluation failed: {analysis}");
                if self.config.policy == Policy::NoTree {
                    return self.restart(node, text);
                }
                self.nodes[node as usize].status = NodeStatus::FailedExhausted;
                self.emit(
                    EventKind::Backtracked,
                    Some(node),
                    json!({"to": parent, "reason": "final evaluation failed"}),
                );
                self.nodes[parent as usize].status = NodeStatus::Open;
                self.after_failure(parent, via, text, node)
            }
        }
    }

    /// Records a failed attempt's analysis and picks the next node.
    fn after_failure(&mut self, node: u64, attempt: usize, text: String, origin: u64) -> Step {
        self.nodes[node as usize].attempts[attempt].feedback = Some(text.clone());
        if self.config.policy == Policy::NoTree {
            return self.restart(origin, text);
        }
        self.record_feedback(node, origin, attempt, text);
        let failed = EvalVerdict::failed("attempt failed");
        match handle_result(&self.nodes[node as usize], &failed, false, &self.config) {
            NextAction::RetrySameLevel => Step::Continue(node),
            _ => self.propagate_up(node),
        }
    }

    /// Marks `node` exhausted and hands the failure to its parent, which
    /// retries if it has attempts left and otherwise exhausts in turn.
    fn propagate_up(&mut self, mut node: u64) -> Step {
        loop {
            self.nodes[node as usize].status = NodeStatus::FailedExhausted;
            let (parent, via) = {
                let n = &self.nodes[node as usize];
                (n.parent, n.via_attempt)
            };
            self.emit(
                EventKind::Backtracked,
                Some(node),
                json!({"to": parent, "reason": "attempts exhausted"}),
            );
            let (Some(parent), Some(via)) = (parent, via) else {
                return Step::Done(TaskStatus::UnresolvedExhausted);
            };
            let n = &self.nodes[node as usize];
            let last = n.feedback.last().map(|f| f.text.as_str()).unwrap_or("no analysis");
            let text = format!(
                "sub-task at node {node} failed after {} attempt(s); last failure: {last}",
                n.attempts.len()
            );
            self.nodes[parent as usize].attempts[via].feedback = Some(text.clone());
            self.record_feedback(parent, node, via, text);
            self.nodes[parent as usize].status = NodeStatus::Open;
            if self.nodes[parent as usize].attempts.len() < self.config.max_children_per_node {
                return Step::Continue(parent);
            }
            node = parent;
        }
    }

    /// Abandons every open path and re-plans from a fresh root that knows
    /// only the most recent failure.
    /// Each restart spends one attempt of the single flat level, so the
    /// variant gets the same retry allowance as one tree level.
    fn restart(&mut self, failed: u64, text: String) -> Step {
        for n in &mut self.nodes {
            if matches!(n.status, NodeStatus::Open | NodeStatus::Expanded) {
                n.status = NodeStatus::FailedExhausted;
            }
        }
        let roots = self.nodes.iter().filter(|n| n.parent.is_none()).count();
        if roots >= self.config.max_children_per_node {
            self.emit(EventKind::Backtracked, Some(failed), json!({"to": null, "reason": "attempts exhausted"}));
            return Step::Done(TaskStatus::UnresolvedExhausted);
        }
        self.emit(EventKind::Backtracked, Some(failed), json!({"to": null, "reason": "restart"}));
        let initial = self.initial.clone();
        let root = self.open_node(None, None, initial);
        let id = self.record_feedback_entry(root, failed, None, text);
        self.last_failure = Some(id);
        Step::Continue(root)
    }

    fn feedback_view(&self, node: u64) -> (Vec<String>, Vec<u64>) {
        match self.config.policy {
            Policy::Full => {
                let fb = &self.nodes[node as usize].feedback;
                (fb.iter().map(|f| f.text.clone()).collect(), fb.iter().map(|f| f.id).collect())
            }
            Policy::NoFeedback => {
                let fb = &self.nodes[node as usize].feedback;
                (
                    (1..=fb.len()).map(|i| format!("attempt {i} failed")).collect(),
                    fb.iter().map(|f| f.id).collect(),
                )
            }
            Policy::NoTree => match &self.last_failure {
                Some(f) => (vec![f.text.clone()], vec![f.id]),
                None => (Vec::new(), Vec::new()),
            },
        }
    }

    fn open_node(&mut self, parent: Option<u64>, via_attempt: Option<usize>, workspace: Snapshot) -> u64 {
        let id = self.nodes.len() as u64;
        let depth = parent.map(|p| self.nodes[p as usize].depth + 1).unwrap_or(0);
        self.nodes.push(PlanNode {
            id,
            parent,
            via_attempt,
            depth,
            workspace,
            proposed_chain: Vec::new(),
            attempts: Vec::new(),
            feedback: Vec::new(),
            status: NodeStatus::Open,
        });
        self.emit(
            EventKind::NodeOpened,
            Some(id),
            json!({"parent": parent, "depth": depth, "via_attempt": via_attempt}),
        );
        id
    }

    fn push_attempt(&mut self, node: u64, call: Option<SwiCall>, tail: Vec<SwiCall>, outcome: AttemptOutcome) -> usize {
        let attempts = &mut self.nodes[node as usize].attempts;
        attempts.push(AttemptRecord {
            call,
            chain_tail: tail,
            outcome,
            verdict: None,
            child: None,
            feedback: None,
        });
        attempts.len() - 1
    }

    fn record_feedback(&mut self, node: u64, origin: u64, attempt: usize, text: String) {
        self.record_feedback_entry(node, origin, Some(attempt), text);
    }

    fn record_feedback_entry(&mut self, node: u64, origin: u64, attempt: Option<usize>, text: String) -> FeedbackEntry {
        let entry = FeedbackEntry {
            id: self.next_feedback,
            origin,
            text,
        };
        self.next_feedback += 1;
        self.emit(
            EventKind::FeedbackRecorded,
            Some(node),
            json!({"id": entry.id, "origin": origin, "attempt": attempt, "text": entry.text}),
        );
        self.nodes[node as usize].feedback.push(entry.clone());
        entry
    }

    fn emit_verdict(&mut self, node: u64, attempt: usize, requested_by: Option<u64>, verdict: &EvalVerdict) {
        self.emit(
            EventKind::Evaluated,
            Some(node),
            json!({
                "attempt": attempt,
                "terminal": requested_by.is_some(),
                "requested_by": requested_by,
                "pass": verdict.pass,
                "failure_analysis": verdict.failure_analysis,
                "dimensions": verdict.dimensions,
            }),
        );
    }

    /// Pushes an event with run-directory paths made relative.
    fn emit(&mut self, kind: EventKind, node: Option<u64>, mut detail: Value) {
        let prefix = format!("{}/", self.run_dir.display());
        relativize(&mut detail, &prefix);
        self.trace.push(kind, node, detail);
    }

    fn finish(mut self, status: TaskStatus) -> Result<TaskResult, EngineError> {
        let rel: Vec<String> = self
            .final_artifacts
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        let path = self.final_node.map(|leaf| {
            let mut ids = vec![leaf];
            while let Some(p) = self.nodes[*ids.last().expect("non-empty") as usize].parent {
                ids.push(p);
            }
            ids.reverse();
            ids
        });
        self.emit(
            EventKind::Terminated,
            None,
            json!({
                "status": status.as_str(),
                "expansions": self.expansions,
                "jobs": self.jobs,
                "planner_calls": self.planner_calls,
                "structural_failures": self.structural_failures,
                "final_artifacts": rel,
                "path": path,
            }),
        );

        let workspace = match self.final_node {
            Some(n) => self.nodes[n as usize].workspace.clone(),
            None => self
                .nodes
                .iter()
                .max_by_key(|n| (n.workspace.artifact_count(), n.id))
                .map(|n| n.workspace.clone())
                .unwrap_or_else(|| self.initial.clone()),
        };
        let trace_path = self.run_dir.join("trace.ndjson");
        self.trace
            .write(&trace_path)
            .map_err(|e| EngineError::io(format!("cannot write {}", trace_path.display()), e))?;
        let workspace_path = self.run_dir.join("workspace.json");
        std::fs::write(&workspace_path, workspace.dump_json())
            .map_err(|e| EngineError::io(format!("cannot write {}", workspace_path.display()), e))?;

        Ok(TaskResult {
            status,
            final_artifacts: self.final_artifacts,
            trace: self.trace,
            expansions: self.expansions,
            jobs: self.jobs,
            planner_calls: self.planner_calls,
            structural_failures: self.structural_failures,
            nodes: self.nodes,
            workspace,
            run_dir: self.run_dir,
            trace_path,
            workspace_path,
            duration: self.started.elapsed(),
        })
    }
}

fn relativize(v: &mut Value, prefix: &str) {
    match v {
        Value::String(s) if s.contains(prefix) => *s = s.replace(prefix, ""),
        Value::Array(items) => items.iter_mut().for_each(|i| relativize(i, prefix)),
        Value::Object(map) => map.values_mut().for_each(|i| relativize(i, prefix)),
        _ => {}
    }
}
