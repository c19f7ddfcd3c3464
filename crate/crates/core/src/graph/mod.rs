//! Node-graph workflows in the ComfyUI API format.
//!
//! A document is a top-level object mapping node ids to
//! `{"class_type": ..., "inputs": {...}}`. An input is either a literal, a
//! link `[source_id, output_index]` or a placeholder string
//! `__PARAM:<key>__` that a template leaves open for instantiation.
//!
//! Graph values are immutable once built; every transforming operation
//! returns a new graph.

mod diff;
mod topo;
mod validate;

pub use diff::{diff_graphs, GraphDiff, InputChange, NodeChange};
pub use topo::{topological_order, CycleError};
pub use validate::{validate_dag, Finding, FindingKind, ValidationReport};

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{Map, Value};

const PLACEHOLDER_PREFIX: &str = "__PARAM:";
const PLACEHOLDER_SUFFIX: &str = "__";

/// Identifier of a node, unique within one graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// A reference to output slot `output_index` of node `source`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Link {
    pub source: NodeId,
    pub output_index: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputValue {
    Literal(Value),
    Link(Link),
    /// Open template parameter, encoded as `__PARAM:<key>__`.
    Placeholder(String),
}

impl InputValue {
    pub fn link(source: impl Into<String>, output_index: u32) -> Self {
        InputValue::Link(Link {
            source: NodeId::new(source),
            output_index,
        })
    }

    pub fn literal(v: impl Into<Value>) -> Self {
        InputValue::Literal(v.into())
    }

    pub fn is_link(&self) -> bool {
        matches!(self, InputValue::Link(_))
    }

    pub fn as_literal(&self) -> Option<&Value> {
        match self {
            InputValue::Literal(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            InputValue::Literal(v) => v.clone(),
            InputValue::Link(l) => {
                Value::Array(vec![Value::String(l.source.0.clone()), Value::from(l.output_index)])
            }
            InputValue::Placeholder(key) => Value::String(placeholder_text(key)),
        }
    }

    fn from_json(node: &str, input: &str, v: Value) -> Result<Self, ParseError> {
        match v {
            Value::String(s) => Ok(match placeholder_key(&s) {
                Some(key) => InputValue::Placeholder(key.to_string()),
                None => InputValue::Literal(Value::String(s)),
            }),
            Value::Array(items) if matches!(items.first(), Some(Value::String(_))) && items.len() <= 2 => {
                let source = items[0].as_str().unwrap_or_default().to_string();
                let output_index = match items.get(1) {
                    None => 0,
                    Some(idx) => idx
                        .as_u64()
                        .and_then(|i| u32::try_from(i).ok())
                        .ok_or_else(|| ParseError::MalformedLink {
                            node: node.to_string(),
                            input: input.to_string(),
                        })?,
                };
                if source.is_empty() {
                    return Err(ParseError::MalformedLink {
                        node: node.to_string(),
                        input: input.to_string(),
                    });
                }
                Ok(InputValue::Link(Link {
                    source: NodeId(source),
                    output_index,
                }))
            }
            other => Ok(InputValue::Literal(other)),
        }
    }
}

/// Renders `key` in the placeholder encoding used inside template documents.
pub fn placeholder_text(key: &str) -> String {
    format!("{PLACEHOLDER_PREFIX}{key}{PLACEHOLDER_SUFFIX}")
}

/// Returns the key if `s` is exactly one placeholder.
pub fn placeholder_key(s: &str) -> Option<&str> {
    let key = s.strip_prefix(PLACEHOLDER_PREFIX)?.strip_suffix(PLACEHOLDER_SUFFIX)?;
    (!key.is_empty()).then_some(key)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowNode {
    pub id: NodeId,
    pub class_type: String,
    pub inputs: IndexMap<String, InputValue>,
    /// Fields other than `class_type` and `inputs` (UI metadata such as
    /// `_meta`), re-emitted verbatim.
    pub extra: Map<String, Value>,
}

impl WorkflowNode {
    pub fn new(id: impl Into<String>, class_type: impl Into<String>) -> Self {
        WorkflowNode {
            id: NodeId::new(id),
            class_type: class_type.into(),
            inputs: IndexMap::new(),
            extra: Map::new(),
        }
    }

    pub fn with_input(mut self, name: impl Into<String>, value: InputValue) -> Self {
        self.inputs.insert(name.into(), value);
        self
    }

    pub fn links(&self) -> impl Iterator<Item = (&str, &Link)> {
        self.inputs.iter().filter_map(|(name, v)| match v {
            InputValue::Link(l) => Some((name.as_str(), l)),
            _ => None,
        })
    }
}

/// Free-form annotations carried alongside a graph. Not part of the API
/// document and ignored by structural equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMetadata {
    pub title: Option<String>,
    pub source: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct WorkflowGraph {
    nodes: IndexMap<NodeId, WorkflowNode>,
    pub metadata: GraphMetadata,
}

/// Structural equality: same node set, class types, inputs and extra fields.
impl PartialEq for WorkflowGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("malformed JSON at byte {offset}: {detail}")]
    MalformedSyntax { offset: usize, detail: String },
    #[error("node {node}: missing class_type")]
    MissingClassType { node: String },
    #[error("duplicate node id {node}")]
    DuplicateNodeId { node: String },
    #[error("node {node}: duplicate input {input}")]
    DuplicateInput { node: String, input: String },
    #[error("node {node}: malformed link in input {input}")]
    MalformedLink { node: String, input: String },
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::MalformedSyntax { .. } => "malformed-syntax",
            ParseError::MissingClassType { .. } => "missing-class-type",
            ParseError::DuplicateNodeId { .. } => "duplicate-node-id",
            ParseError::DuplicateInput { .. } => "duplicate-input",
            ParseError::MalformedLink { .. } => "malformed-link",
        }
    }
}

/// Object entries in document order, duplicates kept.
struct Entries<'a>(Vec<(String, &'a RawValue)>);

impl<'de: 'a, 'a> Deserialize<'de> for Entries<'a> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V<'a>(std::marker::PhantomData<&'a ()>);
        impl<'de: 'a, 'a> serde::de::Visitor<'de> for V<'a> {
            type Value = Entries<'a>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<M: serde::de::MapAccess<'de>>(self, mut m: M) -> Result<Self::Value, M::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = m.next_entry::<String, &'de RawValue>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V(std::marker::PhantomData))
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn syntax_error(text: &str, e: serde_json::Error) -> ParseError {
    ParseError::MalformedSyntax {
        offset: byte_offset(text, e.line(), e.column()),
        detail: e.to_string(),
    }
}

/// Offset of `raw` within `text`; both must come from the same buffer.
fn offset_of(text: &str, raw: &RawValue) -> usize {
    (raw.get().as_ptr() as usize).saturating_sub(text.as_ptr() as usize)
}

/// Parses a UTF-8 API-format document.
pub fn parse_workflow(bytes: &[u8]) -> Result<WorkflowGraph, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ParseError::MalformedSyntax {
        offset: e.valid_up_to(),
        detail: "invalid UTF-8".into(),
    })?;
    WorkflowGraph::from_json_str(text)
}

impl WorkflowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json_str(text: &str) -> Result<Self, ParseError> {
        let top: Entries = serde_json::from_str(text).map_err(|e| syntax_error(text, e))?;
        let mut nodes = IndexMap::with_capacity(top.0.len());
        for (id, raw) in top.0 {
            let id = NodeId(id);
            if nodes.contains_key(&id) {
                return Err(ParseError::DuplicateNodeId { node: id.0 });
            }
            let node = parse_node(text, &id, raw)?;
            nodes.insert(id, node);
        }
        Ok(WorkflowGraph {
            nodes,
            metadata: GraphMetadata::default(),
        })
    }

    /// Builds a graph from nodes; fails on a duplicate id.
    pub fn from_nodes(nodes: impl IntoIterator<Item = WorkflowNode>) -> Result<Self, ParseError> {
        let mut g = WorkflowGraph::new();
        for node in nodes {
            if g.nodes.contains_key(&node.id) {
                return Err(ParseError::DuplicateNodeId { node: node.id.0 });
            }
            if node.class_type.is_empty() {
                return Err(ParseError::MissingClassType { node: node.id.0 });
            }
            g.nodes.insert(node.id.clone(), node);
        }
        Ok(g)
    }

    pub fn with_metadata(mut self, metadata: GraphMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &NodeId) -> Option<&WorkflowNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &WorkflowNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    /// All (source, consumer) pairs induced by links, dangling ones included.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes
            .values()
            .flat_map(|n| n.links().map(move |(_, l)| (l.source.clone(), n.id.clone())))
            .collect()
    }

    /// Every `(node, input, key)` placeholder site, in document order.
    pub fn placeholder_sites(&self) -> Vec<(NodeId, String, String)> {
        self.nodes
            .values()
            .flat_map(|n| {
                n.inputs.iter().filter_map(move |(name, v)| match v {
                    InputValue::Placeholder(k) => Some((n.id.clone(), name.clone(), k.clone())),
                    _ => None,
                })
            })
            .collect()
    }

    /// Returns a copy with `f` applied to every input value.
    pub fn map_inputs<E>(
        &self,
        mut f: impl FnMut(&WorkflowNode, &str, &InputValue) -> Result<Option<InputValue>, E>,
    ) -> Result<WorkflowGraph, E> {
        let mut out = self.clone();
        for (id, node) in &self.nodes {
            let target = out.nodes.get_mut(id).expect("cloned graph has every node");
            for (name, value) in &node.inputs {
                if let Some(new) = f(node, name, value)? {
                    target.inputs.insert(name.clone(), new);
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        let mut top = Map::with_capacity(self.nodes.len());
        for (id, node) in &self.nodes {
            let mut obj = Map::new();
            obj.insert("class_type".into(), Value::String(node.class_type.clone()));
            let inputs: Map<String, Value> =
                node.inputs.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
            obj.insert("inputs".into(), Value::Object(inputs));
            for (k, v) in &node.extra {
                obj.insert(k.clone(), v.clone());
            }
            top.insert(id.0.clone(), Value::Object(obj));
        }
        Value::Object(top)
    }

    /// Compact API-format serialization. This exact text is what remote
    /// backends submit.
    pub fn to_json_string(&self) -> String {
        self.to_json().to_string()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("JSON values always serialize")
    }
}

/// Same as [`WorkflowGraph::to_json_string`].
pub fn serialize_workflow(graph: &WorkflowGraph) -> String {
    graph.to_json_string()
}

fn parse_node(text: &str, id: &NodeId, raw: &RawValue) -> Result<WorkflowNode, ParseError> {
    let fields: Entries = match serde_json::from_str(raw.get()) {
        Ok(f) => f,
        Err(_) => return Err(ParseError::MissingClassType { node: id.0.clone() }),
    };
    let mut class_type = None;
    let mut inputs = IndexMap::new();
    let mut extra = Map::new();
    for (key, value) in fields.0 {
        match key.as_str() {
            "class_type" => match serde_json::from_str::<Value>(value.get()) {
                Ok(Value::String(s)) if !s.is_empty() => class_type = Some(s),
                _ => return Err(ParseError::MissingClassType { node: id.0.clone() }),
            },
            "inputs" => {
                let entries: Entries = serde_json::from_str(value.get()).map_err(|e| {
                    ParseError::MalformedSyntax {
                        offset: offset_of(text, value),
                        detail: format!("node {id}: inputs must be an object ({e})"),
                    }
                })?;
                for (name, raw_input) in entries.0 {
                    let v: Value = serde_json::from_str(raw_input.get())
                        .map_err(|e| syntax_error(raw_input.get(), e))?;
                    if inputs.contains_key(&name) {
                        return Err(ParseError::DuplicateInput {
                            node: id.0.clone(),
                            input: name,
                        });
                    }
                    let iv = InputValue::from_json(&id.0, &name, v)?;
                    inputs.insert(name, iv);
                }
            }
            _ => {
                let v: Value = serde_json::from_str(value.get()).map_err(|e| syntax_error(value.get(), e))?;
                extra.insert(key, v);
            }
        }
    }
    let class_type = class_type.ok_or_else(|| ParseError::MissingClassType { node: id.0.clone() })?;
    Ok(WorkflowNode {
        id: id.clone(),
        class_type,
        inputs,
        extra,
    })
}
