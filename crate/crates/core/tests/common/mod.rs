#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Mutex;

use atelier_core::backend::{Backend, ExecContext, ExecutionOutcome};
use atelier_core::graph::{validate_dag, WorkflowGraph};
use atelier_core::plan::{EventKind, RunTrace};
use atelier_core::swi::Library;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn library() -> Library {
    Library::load_file(&fixtures().join("library.txt")).expect("fixture library loads")
}

/// Passes jobs through and keeps every submitted graph.
pub struct Recording<B> {
    pub inner: B,
    pub graphs: Mutex<Vec<WorkflowGraph>>,
}

impl<B: Backend> Recording<B> {
    pub fn new(inner: B) -> Self {
        Recording {
            inner,
            graphs: Mutex::new(Vec::new()),
        }
    }

    pub fn jobs(&self) -> usize {
        self.graphs.lock().unwrap().len()
    }

    /// Submitted graphs that are not concrete DAGs.
    pub fn structural_failures(&self) -> usize {
        self.graphs
            .lock()
            .unwrap()
            .iter()
            .filter(|g| !validate_dag(g, true).is_clean())
            .count()
    }
}

impl<B: Backend> Backend for Recording<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn execute(&self, graph: &WorkflowGraph, ctx: ExecContext<'_>) -> ExecutionOutcome {
        self.graphs.lock().unwrap().push(graph.clone());
        self.inner.execute(graph, ctx)
    }
}

/// Checks that feedback never leaves the level it belongs to:
/// every node is opened once, nothing in a backtracked subtree is touched
/// again, feedback lands only at its origin or the origin's parent, and a
/// planner call at node m sees only feedback recorded at m.
pub fn check_confinement(trace: &RunTrace) -> Result<(), String> {
    let mut parent: BTreeMap<u64, Option<u64>> = BTreeMap::new();
    let mut closed: BTreeSet<u64> = BTreeSet::new();
    let mut recorded_at: BTreeMap<u64, u64> = BTreeMap::new();

    let in_closed_subtree = |n: u64, parent: &BTreeMap<u64, Option<u64>>, closed: &BTreeSet<u64>| {
        let mut cur = Some(n);
        while let Some(c) = cur {
            if closed.contains(&c) {
                return true;
            }
            cur = parent.get(&c).copied().flatten();
        }
        false
    };

    for e in trace.events() {
        let d = &e.detail;
        match e.event {
            EventKind::NodeOpened => {
                let n = e.node.ok_or("node-opened without node")?;
                let p = d["parent"].as_u64();
                if parent.insert(n, p).is_some() {
                    return Err(format!("node {n} opened twice"));
                }
                if let Some(p) = p {
                    if in_closed_subtree(p, &parent, &closed) {
                        return Err(format!("node {n} opened under closed subtree at seq {}", e.seq));
                    }
                }
            }
            EventKind::Backtracked => {
                let n = e.node.ok_or("backtracked without node")?;
                closed.insert(n);
            }
            EventKind::FeedbackRecorded => {
                let n = e.node.ok_or("feedback without node")?;
                let origin = d["origin"].as_u64().ok_or("feedback without origin")?;
                let origin_parent = parent.get(&origin).copied().flatten();
                if n != origin && Some(n) != origin_parent {
                    return Err(format!("feedback from {origin} recorded at unrelated node {n}"));
                }
                if in_closed_subtree(n, &parent, &closed) {
                    return Err(format!("feedback recorded inside closed subtree at node {n}"));
                }
                recorded_at.insert(d["id"].as_u64().ok_or("feedback without id")?, n);
            }
            EventKind::CallProposed | EventKind::CallExecuted => {
                let n = e.node.ok_or("call without node")?;
                if in_closed_subtree(n, &parent, &closed) {
                    return Err(format!("{} at closed node {n} (seq {})", e.event.as_str(), e.seq));
                }
                if e.event == EventKind::CallProposed {
                    for id in d["feedback_ids"].as_array().into_iter().flatten() {
                        let id = id.as_u64().ok_or("bad feedback id")?;
                        if recorded_at.get(&id) != Some(&n) {
                            return Err(format!("node {n} saw feedback {id} recorded elsewhere"));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}
