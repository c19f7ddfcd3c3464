//! Task state handed from one planning node to the next.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::backend::ExecutionOutcome;
use crate::graph::NodeId;
use crate::util::{fingerprint, relative_to, truncate_chars};

/// Per-entry cap on context log text, in characters.
pub const CONTEXT_ENTRY_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Image,
    Video,
    Other,
}

impl ArtifactKind {
    pub fn from_path(path: &Path) -> Self {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" | "jpg" | "jpeg" | "webp" | "bmp" | "tif" | "tiff" => ArtifactKind::Image,
            "mp4" | "webm" | "mov" | "mkv" | "gif" | "avi" => ArtifactKind::Video,
            _ => ArtifactKind::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Image => "image",
            ArtifactKind::Video => "video",
            ArtifactKind::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub artifact_ref: PathBuf,
    pub summary: String,
    pub details: String,
    pub scene_traits: Vec<String>,
}

/// Which plan node and workflow produced an artifact. User inputs have no
/// plan node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactOrigin {
    pub plan_node: Option<u64>,
    pub workflow: String,
}

impl ArtifactOrigin {
    pub fn input() -> Self {
        ArtifactOrigin {
            plan_node: None,
            workflow: "input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: PathBuf,
    pub kind: ArtifactKind,
    pub origin: ArtifactOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_node: Option<NodeId>,
    pub annotation: Option<Annotation>,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkspaceError {
    #[error("only completed outcomes can be ingested (got {0})")]
    NotCompleted(&'static str),
    #[error("cannot read artifact {path}: {detail}")]
    Unreadable { path: PathBuf, detail: String },
    #[error("annotation refers to {0}, which the outcome did not produce")]
    StrayAnnotation(PathBuf),
}

pub type Snapshot = Arc<Workspace>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Workspace {
    pub instruction: String,
    pub enriched_spec: String,
    artifacts: IndexMap<PathBuf, ArtifactRecord>,
    context_log: Vec<String>,
    /// Paths in the context log are shown relative to this directory.
    #[serde(skip)]
    display_root: Option<PathBuf>,
    #[serde(skip)]
    parent: Option<Snapshot>,
}

impl Workspace {
    pub fn new(instruction: impl Into<String>) -> Self {
        let instruction = instruction.into();
        Workspace {
            enriched_spec: instruction.clone(),
            instruction,
            ..Default::default()
        }
    }

    pub fn with_display_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.display_root = Some(root.into());
        self
    }

    /// Registers user-supplied input files.
    pub fn add_inputs(&mut self, inputs: &[PathBuf]) -> Result<(), WorkspaceError> {
        for path in inputs {
            let record = self.make_record(path, ArtifactOrigin::input(), None, None)?;
            self.context_log.push(truncate_chars(
                &format!("input {} ({})", self.display(path), record.kind.as_str()),
                CONTEXT_ENTRY_CAP,
            ));
            self.artifacts.insert(path.clone(), record);
        }
        Ok(())
    }

    /// A new workspace extending `parent`; the parent itself stays frozen.
    pub fn child_of(parent: &Snapshot) -> Self {
        let mut ws = (**parent).clone();
        ws.parent = Some(parent.clone());
        ws
    }

    pub fn parent(&self) -> Option<&Snapshot> {
        self.parent.as_ref()
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &ArtifactRecord> {
        self.artifacts.values()
    }

    pub fn artifact(&self, path: &Path) -> Option<&ArtifactRecord> {
        self.artifacts.get(path)
    }

    pub fn artifact_count(&self) -> usize {
        self.artifacts.len()
    }

    pub fn latest_artifact(&self) -> Option<&ArtifactRecord> {
        self.artifacts.values().last()
    }

    pub fn context_log(&self) -> &[String] {
        &self.context_log
    }

    pub fn display(&self, path: &Path) -> String {
        match &self.display_root {
            Some(root) => relative_to(path, root).display().to_string(),
            None => path.display().to_string(),
        }
    }

    fn make_record(
        &self,
        path: &Path,
        origin: ArtifactOrigin,
        output_node: Option<NodeId>,
        annotation: Option<Annotation>,
    ) -> Result<ArtifactRecord, WorkspaceError> {
        let bytes = std::fs::read(path).map_err(|e| WorkspaceError::Unreadable {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Ok(ArtifactRecord {
            path: path.to_path_buf(),
            kind: ArtifactKind::from_path(path),
            origin,
            output_node,
            annotation,
            fingerprint: fingerprint(&bytes),
        })
    }

    /// Registers every artifact of a completed outcome and appends one
    /// context entry per artifact (one entry in total when there are none).
    /// Returns warnings, e.g. for replaced duplicate paths.
    pub fn ingest_outcome(
        &mut self,
        outcome: &ExecutionOutcome,
        annotations: &[Annotation],
        origin: ArtifactOrigin,
    ) -> Result<Vec<String>, WorkspaceError> {
        if !outcome.is_completed() {
            return Err(WorkspaceError::NotCompleted(outcome.status.as_str()));
        }
        if let Some(a) = annotations
            .iter()
            .find(|a| !outcome.artifacts.iter().any(|p| p.path == a.artifact_ref))
        {
            return Err(WorkspaceError::StrayAnnotation(a.artifact_ref.clone()));
        }
        let mut warnings = Vec::new();
        let label = match origin.plan_node {
            Some(n) => format!("node {n} via {}", origin.workflow),
            None => origin.workflow.clone(),
        };
        if outcome.artifacts.is_empty() {
            self.context_log
                .push(truncate_chars(&format!("[{label}] completed without artifacts"), CONTEXT_ENTRY_CAP));
            return Ok(warnings);
        }
        for produced in &outcome.artifacts {
            let annotation = annotations.iter().find(|a| a.artifact_ref == produced.path).cloned();
            let record = self.make_record(&produced.path, origin.clone(), Some(produced.node.clone()), annotation)?;
            let summary = record
                .annotation
                .as_ref()
                .map(|a| a.summary.as_str())
                .unwrap_or("not annotated");
            let entry = format!(
                "[{label}] {} ({}): {summary}",
                self.display(&produced.path),
                record.kind.as_str()
            );
            self.context_log.push(truncate_chars(&entry, CONTEXT_ENTRY_CAP));
            if self.artifacts.insert(produced.path.clone(), record).is_some() {
                let w = format!("artifact {} replaced an existing record", self.display(&produced.path));
                log::warn!("{w}");
                warnings.push(w);
            }
        }
        Ok(warnings)
    }

    pub fn snapshot(&self) -> Snapshot {
        snapshot(self)
    }

    /// Pretty JSON of the workspace state (without the parent chain).
    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workspace serializes")
    }
}

/// An immutable copy; later changes to `ws` are not visible through it.
pub fn snapshot(ws: &Workspace) -> Snapshot {
    Arc::new(ws.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ProducedArtifact;
    use std::time::Duration;

    fn outcome(paths: &[&Path]) -> ExecutionOutcome {
        ExecutionOutcome::completed(
            paths
                .iter()
                .map(|p| ProducedArtifact {
                    node: NodeId::from("9"),
                    path: p.to_path_buf(),
                })
                .collect(),
            Duration::ZERO,
        )
    }

    fn origin() -> ArtifactOrigin {
        ArtifactOrigin {
            plan_node: Some(1),
            workflow: "t2i".into(),
        }
    }

    #[test]
    fn snapshot_isolated_from_later_changes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        std::fs::write(&p, b"abc").unwrap();
        let mut ws = Workspace::new("task");
        let snap = ws.snapshot();
        ws.ingest_outcome(&outcome(&[&p]), &[], origin()).unwrap();
        assert_eq!(snap.artifact_count(), 0);
        assert_eq!(ws.artifact_count(), 1);
        assert_eq!(ws.context_log().len(), 1);
    }

    #[test]
    fn zero_artifacts_adds_only_context() {
        let mut ws = Workspace::new("task");
        ws.ingest_outcome(&outcome(&[]), &[], origin()).unwrap();
        assert_eq!(ws.artifact_count(), 0);
        assert_eq!(ws.context_log().len(), 1);
    }

    #[test]
    fn identical_bytes_same_fingerprint_and_duplicate_warns() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
        std::fs::write(&a, b"same").unwrap();
        std::fs::write(&b, b"same").unwrap();
        let mut ws = Workspace::new("task");
        ws.ingest_outcome(&outcome(&[&a, &b]), &[], origin()).unwrap();
        let fps: Vec<_> = ws.artifacts().map(|r| r.fingerprint.clone()).collect();
        assert_eq!(fps[0], fps[1]);
        let warnings = ws.ingest_outcome(&outcome(&[&a]), &[], origin()).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(ws.artifact_count(), 2);
    }

    #[test]
    fn failed_outcome_rejected() {
        let mut ws = Workspace::new("task");
        let err = ws
            .ingest_outcome(&ExecutionOutcome::failed("x", Duration::ZERO), &[], origin())
            .unwrap_err();
        assert_eq!(err, WorkspaceError::NotCompleted("failed"));
    }

    #[test]
    fn long_context_entries_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        std::fs::write(&p, b"abc").unwrap();
        let mut ws = Workspace::new("task");
        let ann = Annotation {
            artifact_ref: p.clone(),
            summary: "x".repeat(5000),
            details: String::new(),
            scene_traits: vec![],
        };
        ws.ingest_outcome(&outcome(&[&p]), &[ann], origin()).unwrap();
        assert_eq!(ws.context_log()[0].chars().count(), CONTEXT_ENTRY_CAP);
    }

    #[test]
    fn child_extends_parent() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        std::fs::write(&p, b"abc").unwrap();
        let parent = Workspace::new("task").snapshot();
        let mut child = Workspace::child_of(&parent);
        child.ingest_outcome(&outcome(&[&p]), &[], origin()).unwrap();
        assert_eq!(parent.artifact_count(), 0);
        assert_eq!(child.artifact_count(), 1);
        assert!(Arc::ptr_eq(child.parent().unwrap(), &parent));
    }
}
