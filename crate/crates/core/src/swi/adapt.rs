use std::collections::BTreeMap;

use serde_json::Value;

use super::{SwiDescriptor, ValueDomain};
use crate::graph::{InputValue, WorkflowGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdaptError {
    #[error("unknown constraint {0}")]
    UnknownConstraint(String),
    #[error("constraint {key}: {detail}")]
    InvalidValue { key: String, detail: String },
}

#[derive(Debug, Clone)]
pub struct Adapted {
    pub graph: WorkflowGraph,
    /// One entry per clamped or ignored value.
    pub warnings: Vec<String>,
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Rewrites the literal inputs targeted by `constraints`. Node and link sets
/// are never touched; out-of-range values clamp into the declared domain
/// with a warning.
pub fn adapt_parameters(
    graph: &WorkflowGraph,
    descriptor: &SwiDescriptor,
    constraints: &BTreeMap<String, Value>,
) -> Result<Adapted, AdaptError> {
    let mut warnings = Vec::new();
    // (class, input) -> requested value
    let mut assignments: BTreeMap<(&str, &str), AssignedValue> = BTreeMap::new();

    for (key, value) in constraints {
        let specs: Vec<_> = descriptor.constraints.iter().filter(|c| &c.key == key).collect();
        if specs.is_empty() {
            return Err(AdaptError::UnknownConstraint(key.clone()));
        }
        let assigned = match &specs[0].domain {
            ValueDomain::Range { lo, hi } => {
                let requested = as_number(value).ok_or_else(|| AdaptError::InvalidValue {
                    key: key.clone(),
                    detail: format!("expected a number, got {value}"),
                })?;
                if !requested.is_finite() {
                    return Err(AdaptError::InvalidValue {
                        key: key.clone(),
                        detail: "value is not finite".into(),
                    });
                }
                let clamped = requested.max(*lo).min(*hi);
                if clamped != requested {
                    warnings.push(format!("{key}: {requested} clamped to {clamped} (domain {lo}..{hi})"));
                }
                Some(AssignedValue::Number(clamped))
            }
            ValueDomain::OneOf(items) => match value.as_str() {
                Some(s) if items.iter().any(|i| i == s) => Some(AssignedValue::Text(s.to_string())),
                _ => {
                    warnings.push(format!("{key}: {value} is not one of {}; left unchanged", items.join("|")));
                    None
                }
            },
        };
        if let Some(assigned) = assigned {
            for spec in specs {
                assignments.insert((&spec.target_class, &spec.target_input), assigned.clone());
            }
        }
    }

    let graph = graph.map_inputs::<AdaptError>(|node, input, current| {
        let Some(assigned) = assignments.get(&(node.class_type.as_str(), input)) else {
            return Ok(None);
        };
        let InputValue::Literal(old) = current else {
            return Ok(None);
        };
        Ok(Some(InputValue::Literal(assigned.to_json(old))))
    })?;
    Ok(Adapted { graph, warnings })
}

#[derive(Debug, Clone)]
enum AssignedValue {
    Number(f64),
    Text(String),
}

impl AssignedValue {
    /// Keeps integer literals integral.
    fn to_json(&self, old: &Value) -> Value {
        match self {
            AssignedValue::Text(s) => Value::String(s.clone()),
            AssignedValue::Number(n) if old.is_i64() || old.is_u64() => Value::from(n.round() as i64),
            AssignedValue::Number(n) => Value::from(*n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{diff_graphs, WorkflowNode};
    use crate::swi::{ConstraintSpec, TaskKind};

    fn video_graph() -> WorkflowGraph {
        WorkflowGraph::from_nodes([
            WorkflowNode::new("1", "EmptyLatentImage")
                .with_input("width", InputValue::literal(512))
                .with_input("height", InputValue::literal(512)),
            WorkflowNode::new("2", "VHS_VideoCombine")
                .with_input("frame_rate", InputValue::literal(16))
                .with_input("format", InputValue::literal("video/h264-mp4"))
                .with_input("images", InputValue::link("1", 0)),
        ])
        .unwrap()
    }

    fn descriptor() -> SwiDescriptor {
        let c = |key: &str, class: &str, input: &str, domain| ConstraintSpec {
            key: key.into(),
            target_class: class.into(),
            target_input: input.into(),
            domain,
        };
        SwiDescriptor {
            name: "v".into(),
            description: "d".into(),
            task_kind: TaskKind::TextToVideo,
            params: vec![],
            constraints: vec![
                c("resolution", "EmptyLatentImage", "width", ValueDomain::Range { lo: 256.0, hi: 2048.0 }),
                c("frame-rate", "VHS_VideoCombine", "frame_rate", ValueDomain::Range { lo: 8.0, hi: 60.0 }),
                c(
                    "format",
                    "VHS_VideoCombine",
                    "format",
                    ValueDomain::OneOf(vec!["video/h264-mp4".into(), "image/gif".into()]),
                ),
            ],
            template: None,
        }
    }

    #[test]
    fn empty_constraints_is_identity() {
        let out = adapt_parameters(&video_graph(), &descriptor(), &BTreeMap::new()).unwrap();
        assert_eq!(out.graph, video_graph());
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn only_target_literal_changes() {
        let cs = BTreeMap::from([("resolution".to_string(), Value::from(1024))]);
        let out = adapt_parameters(&video_graph(), &descriptor(), &cs).unwrap();
        let d = diff_graphs(&video_graph(), &out.graph);
        assert_eq!(d.changed_literals.len(), 1);
        assert_eq!(d.changed_literals[0].after, Some(InputValue::literal(1024)));
        assert!(d.preserves_structure());
    }

    #[test]
    fn out_of_range_clamps_with_one_warning() {
        let cs = BTreeMap::from([("frame-rate".to_string(), Value::from(9999))]);
        let out = adapt_parameters(&video_graph(), &descriptor(), &cs).unwrap();
        let fr = &out.graph.node(&"2".into()).unwrap().inputs["frame_rate"];
        assert_eq!(fr, &InputValue::literal(60));
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn enumerated_domain() {
        let cs = BTreeMap::from([("format".to_string(), Value::from("image/gif"))]);
        let out = adapt_parameters(&video_graph(), &descriptor(), &cs).unwrap();
        assert_eq!(out.graph.node(&"2".into()).unwrap().inputs["format"], InputValue::literal("image/gif"));
        let cs = BTreeMap::from([("format".to_string(), Value::from("video/webm"))]);
        let out = adapt_parameters(&video_graph(), &descriptor(), &cs).unwrap();
        assert_eq!(out.graph, video_graph());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn unknown_constraint_is_an_error() {
        let cs = BTreeMap::from([("upscale-ratio".to_string(), Value::from(2))]);
        assert_eq!(
            adapt_parameters(&video_graph(), &descriptor(), &cs).unwrap_err(),
            AdaptError::UnknownConstraint("upscale-ratio".into())
        );
    }
}
