use serde_json::Value;

use super::{AtomicWorkflow, SwiCall};
use crate::graph::{InputValue, NodeId, WorkflowGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstantiationError {
    #[error("call targets {called} but workflow is {expected}")]
    WrongWorkflow { called: String, expected: String },
    #[error("missing argument {0}")]
    MissingArgument(String),
    #[error("argument {0} has the wrong type")]
    TypeMismatch(String),
    #[error("unknown argument {0}")]
    UnknownArgument(String),
}

/// Where a placeholder was filled during instantiation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceholderSite {
    pub node: NodeId,
    pub input: String,
    pub key: String,
}

/// Fills every placeholder of `wf`'s template from `call`.
pub fn instantiate(wf: &AtomicWorkflow, call: &SwiCall) -> Result<WorkflowGraph, InstantiationError> {
    instantiate_recorded(wf, call).map(|(g, _)| g)
}

/// Like [`instantiate`], also returning the list of filled sites.
pub fn instantiate_recorded(
    wf: &AtomicWorkflow,
    call: &SwiCall,
) -> Result<(WorkflowGraph, Vec<PlaceholderSite>), InstantiationError> {
    let d = &wf.descriptor;
    if call.workflow != d.name {
        return Err(InstantiationError::WrongWorkflow {
            called: call.workflow.clone(),
            expected: d.name.clone(),
        });
    }
    if let Some(key) = call.arguments.keys().find(|k| d.param(k).is_none()) {
        return Err(InstantiationError::UnknownArgument(key.clone()));
    }

    let mut values: Vec<(&str, &Value)> = Vec::with_capacity(d.params.len());
    for p in &d.params {
        match call.arguments.get(&p.key).or(p.default.as_ref()) {
            Some(v) if p.kind.accepts(v) => values.push((&p.key, v)),
            Some(_) => return Err(InstantiationError::TypeMismatch(p.key.clone())),
            None if p.required => return Err(InstantiationError::MissingArgument(p.key.clone())),
            None => {}
        }
    }

    let mut sites = Vec::new();
    let graph = wf.template.map_inputs(|node, input, value| {
        let InputValue::Placeholder(key) = value else {
            return Ok(None);
        };
        let (_, v) = values
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| InstantiationError::MissingArgument(key.clone()))?;
        sites.push(PlaceholderSite {
            node: node.id.clone(),
            input: input.to_string(),
            key: key.clone(),
        });
        Ok(Some(InputValue::Literal((*v).clone())))
    })?;
    Ok((graph, sites))
}
