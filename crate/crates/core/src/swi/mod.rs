//! Atomic workflow library exposed as natural-language functions.
//!
//! Each [`AtomicWorkflow`] pairs a template graph with a [`SwiDescriptor`]:
//! what the workflow does, which parameters fill its placeholders, and which
//! literal inputs may be tuned through high-level constraints. The whole
//! library renders to one context document for a planner; no per-node
//! documentation is needed.

mod adapt;
mod document;
mod instantiate;

pub use adapt::{adapt_parameters, AdaptError, Adapted};
pub use document::parse_descriptor_document;
pub use instantiate::{instantiate, instantiate_recorded, InstantiationError, PlaceholderSite};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::{parse_workflow, validate_dag, InputValue, ParseError, WorkflowGraph};

/// Default planner context budget, in whitespace-separated words.
pub const DEFAULT_CONTEXT_BUDGET: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    TextToImage,
    ImageToImage,
    TextToVideo,
    ImageToVideo,
    VideoToVideo,
    Auxiliary,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::TextToImage,
        TaskKind::ImageToImage,
        TaskKind::TextToVideo,
        TaskKind::ImageToVideo,
        TaskKind::VideoToVideo,
        TaskKind::Auxiliary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::TextToImage => "text-to-image",
            TaskKind::ImageToImage => "image-to-image",
            TaskKind::TextToVideo => "text-to-video",
            TaskKind::ImageToVideo => "image-to-video",
            TaskKind::VideoToVideo => "video-to-video",
            TaskKind::Auxiliary => "auxiliary",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown task kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    PromptText,
    ImagePath,
    VideoPath,
    Number,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::PromptText => "prompt-text",
            ParamKind::ImagePath => "image-path",
            ParamKind::VideoPath => "video-path",
            ParamKind::Number => "number",
        }
    }

    pub fn accepts(self, v: &Value) -> bool {
        match self {
            ParamKind::Number => v.is_number(),
            _ => v.is_string(),
        }
    }
}

impl FromStr for ParamKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [ParamKind::PromptText, ParamKind::ImagePath, ParamKind::VideoPath, ParamKind::Number]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown parameter kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub key: String,
    pub kind: ParamKind,
    pub required: bool,
    /// Used for optional parameters the call leaves out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueDomain {
    Range { lo: f64, hi: f64 },
    OneOf(Vec<String>),
}

impl fmt::Display for ValueDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueDomain::Range { lo, hi } => write!(f, "{lo}..{hi}"),
            ValueDomain::OneOf(items) => f.write_str(&items.join("|")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub key: String,
    pub target_class: String,
    pub target_input: String,
    pub domain: ValueDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwiDescriptor {
    pub name: String,
    pub description: String,
    pub task_kind: TaskKind,
    pub params: Vec<ParamSpec>,
    pub constraints: Vec<ConstraintSpec>,
    /// Template path relative to the descriptor document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

impl SwiDescriptor {
    pub fn param(&self, key: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.key == key)
    }

    pub fn required_params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.params.iter().filter(|p| p.required)
    }
}

#[derive(Debug, Clone)]
pub struct AtomicWorkflow {
    pub descriptor: SwiDescriptor,
    pub template: WorkflowGraph,
}

/// One invocation of a library function proposed by a planner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwiCall {
    pub workflow: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constraints: BTreeMap<String, Value>,
}

impl SwiCall {
    pub fn new(workflow: impl Into<String>) -> Self {
        SwiCall {
            workflow: workflow.into(),
            ..Default::default()
        }
    }

    pub fn arg(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.arguments.insert(key.into(), value.into());
        self
    }

    pub fn constraint(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.constraints.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LibraryError {
    #[error("descriptor document line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("{descriptor}: template file {path} not found")]
    UnknownTemplateFile { descriptor: String, path: String },
    #[error("{descriptor}: template does not parse: {source}")]
    TemplateParse { descriptor: String, source: ParseError },
    #[error("{descriptor}: template is not a valid DAG: {detail}")]
    InvalidTemplate { descriptor: String, detail: String },
    #[error("duplicate workflow name {descriptor}")]
    DuplicateName { descriptor: String },
    #[error("{descriptor}: {detail}")]
    InvalidDescriptor { descriptor: String, detail: String },
    #[error("{descriptor}: template placeholder {key} is not a declared parameter")]
    UnboundPlaceholder { descriptor: String, key: String },
    #[error("{descriptor}: required parameter {key} has no placeholder in the template")]
    MissingRequiredPlaceholder { descriptor: String, key: String },
    #[error("{descriptor}: constraint {key} targets {target}, which is not a literal input of the template")]
    InvalidConstraintTarget { descriptor: String, key: String, target: String },
    #[error("{descriptor}: constraints {first} and {second} both target {target}")]
    DuplicateConstraintTarget {
        descriptor: String,
        first: String,
        second: String,
        target: String,
    },
}

impl LibraryError {
    pub fn kind(&self) -> &'static str {
        match self {
            LibraryError::Syntax { .. } => "syntax",
            LibraryError::UnknownTemplateFile { .. } => "unknown-template-file",
            LibraryError::TemplateParse { .. } => "template-parse",
            LibraryError::InvalidTemplate { .. } => "invalid-template",
            LibraryError::DuplicateName { .. } => "duplicate-name",
            LibraryError::InvalidDescriptor { .. } => "invalid-descriptor",
            LibraryError::UnboundPlaceholder { .. } => "unbound-placeholder",
            LibraryError::MissingRequiredPlaceholder { .. } => "missing-required-placeholder",
            LibraryError::InvalidConstraintTarget { .. } => "invalid-constraint-target",
            LibraryError::DuplicateConstraintTarget { .. } => "duplicate-constraint-target",
        }
    }
}

impl AtomicWorkflow {
    /// Pairs a descriptor with its template, checking that they agree.
    pub fn new(descriptor: SwiDescriptor, template: WorkflowGraph) -> Result<Self, LibraryError> {
        let name = descriptor.name.clone();
        let invalid = |detail: String| LibraryError::InvalidDescriptor {
            descriptor: name.clone(),
            detail,
        };
        if name.trim().is_empty() {
            return Err(invalid("empty name".into()));
        }
        if descriptor.description.trim().is_empty() {
            return Err(invalid("empty description".into()));
        }
        let mut keys = BTreeSet::new();
        for p in &descriptor.params {
            if p.key.is_empty() || !keys.insert(p.key.as_str()) {
                return Err(invalid(format!("parameter key {:?} is empty or repeated", p.key)));
            }
            if let Some(d) = &p.default {
                if !p.kind.accepts(d) {
                    return Err(invalid(format!("default for {} is not a {}", p.key, p.kind.as_str())));
                }
            }
        }

        let report = validate_dag(&template, false);
        if !report.is_clean() {
            let detail = report.findings.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; ");
            return Err(LibraryError::InvalidTemplate { descriptor: name, detail });
        }

        let used: BTreeSet<String> = template.placeholder_sites().into_iter().map(|(_, _, k)| k).collect();
        if let Some(key) = used.iter().find(|k| !keys.contains(k.as_str())) {
            return Err(LibraryError::UnboundPlaceholder {
                descriptor: name,
                key: key.clone(),
            });
        }
        if let Some(p) = descriptor.required_params().find(|p| !used.contains(&p.key)) {
            return Err(LibraryError::MissingRequiredPlaceholder {
                descriptor: name,
                key: p.key.clone(),
            });
        }

        let mut targets: BTreeMap<(String, String), String> = BTreeMap::new();
        for c in &descriptor.constraints {
            let target = format!("{}.{}", c.target_class, c.target_input);
            let has_literal = template.nodes().any(|n| {
                n.class_type == c.target_class && matches!(n.inputs.get(&c.target_input), Some(InputValue::Literal(_)))
            });
            if !has_literal {
                return Err(LibraryError::InvalidConstraintTarget {
                    descriptor: name,
                    key: c.key.clone(),
                    target,
                });
            }
            if let ValueDomain::Range { lo, hi } = c.domain {
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(invalid(format!("constraint {} has empty range {lo}..{hi}", c.key)));
                }
            }
            let slot = (c.target_class.clone(), c.target_input.clone());
            if let Some(first) = targets.insert(slot, c.key.clone()) {
                return Err(LibraryError::DuplicateConstraintTarget {
                    descriptor: name,
                    first,
                    second: c.key.clone(),
                    target,
                });
            }
        }

        let mut template = template;
        template.metadata.title = Some(descriptor.name.clone());
        if template.metadata.source.is_none() {
            template.metadata.source = descriptor.template.clone();
        }
        Ok(AtomicWorkflow { descriptor, template })
    }
}

/// Immutable name-keyed collection of atomic workflows, in document order.
#[derive(Debug, Clone, Default)]
pub struct Library {
    entries: IndexMap<String, Arc<AtomicWorkflow>>,
}

impl Library {
    pub fn from_workflows(workflows: impl IntoIterator<Item = AtomicWorkflow>) -> Result<Self, LibraryError> {
        let mut entries = IndexMap::new();
        for wf in workflows {
            let name = wf.descriptor.name.clone();
            if entries.contains_key(&name) {
                return Err(LibraryError::DuplicateName { descriptor: name });
            }
            entries.insert(name, Arc::new(wf));
        }
        Ok(Library { entries })
    }

    /// Loads a descriptor document; template paths resolve against
    /// `template_dir`.
    pub fn load(descriptor_document: &str, template_dir: &Path) -> Result<Self, LibraryError> {
        let descriptors = parse_descriptor_document(descriptor_document)?;
        let mut workflows = Vec::with_capacity(descriptors.len());
        let mut seen = BTreeSet::new();
        for d in descriptors {
            if !seen.insert(d.name.clone()) {
                return Err(LibraryError::DuplicateName { descriptor: d.name });
            }
            let rel = d.template.clone().unwrap_or_default();
            let path: PathBuf = template_dir.join(&rel);
            let bytes = std::fs::read(&path).map_err(|_| LibraryError::UnknownTemplateFile {
                descriptor: d.name.clone(),
                path: rel.clone(),
            })?;
            let template = parse_workflow(&bytes).map_err(|source| LibraryError::TemplateParse {
                descriptor: d.name.clone(),
                source,
            })?;
            workflows.push(AtomicWorkflow::new(d, template)?);
        }
        Library::from_workflows(workflows)
    }

    /// Loads a descriptor document file, resolving templates next to it.
    pub fn load_file(path: &Path) -> Result<Self, LibraryError> {
        let text = std::fs::read_to_string(path).map_err(|e| LibraryError::Syntax {
            line: 0,
            detail: format!("cannot read {}: {e}", path.display()),
        })?;
        Library::load(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&AtomicWorkflow> {
        self.entries.get(name).map(Arc::as_ref)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AtomicWorkflow> {
        self.entries.values().map(Arc::as_ref)
    }

    /// The planner-facing document: every descriptor, in library order.
    /// Depends only on descriptors, never on template contents.
    pub fn render_context(&self) -> String {
        let mut out = String::from("# Atomic workflow library\n");
        out.push_str(&format!(
            "# {} workflow(s). Invoke one by name with its parameters; constraints are optional.\n",
            self.entries.len()
        ));
        for wf in self.iter() {
            let d = &wf.descriptor;
            out.push_str(&format!("\n## {}\n", d.name));
            out.push_str(&format!("kind: {}\n", d.task_kind));
            out.push_str(&format!("description: {}\n", d.description.trim()));
            if !d.params.is_empty() {
                out.push_str("params:\n");
                for p in &d.params {
                    let req = if p.required { "required" } else { "optional" };
                    out.push_str(&format!("  - {} ({}, {req})\n", p.key, p.kind.as_str()));
                }
            }
            if !d.constraints.is_empty() {
                out.push_str("constraints:\n");
                let mut seen = BTreeSet::new();
                for c in &d.constraints {
                    if seen.insert(&c.key) {
                        out.push_str(&format!("  - {} in {}\n", c.key, c.domain));
                    }
                }
            }
        }
        out
    }
}

/// Whitespace-split word count, used as a rough token estimate.
pub fn estimate_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}
