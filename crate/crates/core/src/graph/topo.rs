use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::validate::cyclic_components;
use super::{NodeId, WorkflowGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("workflow graph contains a cycle through {}", .nodes.iter().map(NodeId::as_str).collect::<Vec<_>>().join(", "))]
pub struct CycleError {
    pub nodes: Vec<NodeId>,
}

/// Kahn's algorithm with a min-heap over node ids: every link source comes
/// before its consumer, ties go to the lexicographically smallest id.
/// Links to missing nodes are ignored.
pub fn topological_order(graph: &WorkflowGraph) -> Result<Vec<NodeId>, CycleError> {
    let mut indegree: HashMap<&NodeId, usize> = graph.node_ids().map(|id| (id, 0)).collect();
    let mut consumers: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
    for node in graph.nodes() {
        for (_, link) in node.links() {
            if let Some(src) = graph.node(&link.source) {
                *indegree.get_mut(&node.id).expect("node is indexed") += 1;
                consumers.entry(&src.id).or_default().push(&node.id);
            }
        }
    }

    let mut ready: BinaryHeap<Reverse<&NodeId>> =
        indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| Reverse(id)).collect();
    let mut order = Vec::with_capacity(graph.len());
    while let Some(Reverse(id)) = ready.pop() {
        order.push(id.clone());
        for &next in consumers.get(id).into_iter().flatten() {
            let d = indegree.get_mut(next).expect("node is indexed");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(next));
            }
        }
    }

    if order.len() == graph.len() {
        Ok(order)
    } else {
        let nodes = cyclic_components(graph).into_iter().next().unwrap_or_default();
        Err(CycleError { nodes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{InputValue, WorkflowNode};

    #[test]
    fn chain_in_dependency_order() {
        let g = WorkflowGraph::from_nodes([
            WorkflowNode::new("A", "Op").with_input("x", InputValue::link("B", 0)),
            WorkflowNode::new("B", "Op").with_input("x", InputValue::link("C", 0)),
            WorkflowNode::new("C", "Op"),
        ])
        .unwrap();
        let order = topological_order(&g).unwrap();
        assert_eq!(order, vec!["C".into(), "B".into(), "A".into()] as Vec<NodeId>);
    }

    #[test]
    fn cycle_is_reported() {
        let g = WorkflowGraph::from_nodes([
            WorkflowNode::new("1", "Op").with_input("x", InputValue::link("2", 0)),
            WorkflowNode::new("2", "Op").with_input("x", InputValue::link("1", 0)),
            WorkflowNode::new("3", "Op"),
        ])
        .unwrap();
        let err = topological_order(&g).unwrap_err();
        assert_eq!(err.nodes, vec![NodeId::from("1"), NodeId::from("2")]);
    }
}
