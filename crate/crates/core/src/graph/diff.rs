use std::collections::BTreeSet;

use super::{InputValue, NodeId, WorkflowGraph};

/// A change to one input. `before`/`after` are `None` when the input is
/// absent on that side.
#[derive(Debug, Clone, PartialEq)]
pub struct InputChange {
    pub node: NodeId,
    pub input: String,
    pub before: Option<InputValue>,
    pub after: Option<InputValue>,
}

impl InputChange {
    fn swapped(&self) -> Self {
        InputChange {
            node: self.node.clone(),
            input: self.input.clone(),
            before: self.after.clone(),
            after: self.before.clone(),
        }
    }
}

/// A change to a node attribute other than its inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeChange {
    pub node: NodeId,
    pub field: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphDiff {
    pub added: Vec<NodeId>,
    pub removed: Vec<NodeId>,
    pub changed_nodes: Vec<NodeChange>,
    /// Input changes where neither side is a link.
    pub changed_literals: Vec<InputChange>,
    /// Input changes where at least one side is a link.
    pub changed_links: Vec<InputChange>,
}

impl GraphDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty()
            && self.removed.is_empty()
            && self.changed_nodes.is_empty()
            && self.changed_literals.is_empty()
            && self.changed_links.is_empty()
    }

    /// True when node set and link set are untouched.
    pub fn preserves_structure(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.changed_links.is_empty()
    }

    /// The diff of the reversed comparison.
    pub fn swapped(&self) -> GraphDiff {
        GraphDiff {
            added: self.removed.clone(),
            removed: self.added.clone(),
            changed_nodes: self.changed_nodes.clone(),
            changed_literals: self.changed_literals.iter().map(InputChange::swapped).collect(),
            changed_links: self.changed_links.iter().map(InputChange::swapped).collect(),
        }
    }
}

/// Compares two graphs node by node. Entries are sorted by node id, then
/// input name.
pub fn diff_graphs(a: &WorkflowGraph, b: &WorkflowGraph) -> GraphDiff {
    let ids_a: BTreeSet<&NodeId> = a.node_ids().collect();
    let ids_b: BTreeSet<&NodeId> = b.node_ids().collect();
    let mut diff = GraphDiff {
        added: ids_b.difference(&ids_a).map(|&id| id.clone()).collect(),
        removed: ids_a.difference(&ids_b).map(|&id| id.clone()).collect(),
        ..GraphDiff::default()
    };

    for &id in ids_a.intersection(&ids_b) {
        let (na, nb) = (a.node(id).expect("in a"), b.node(id).expect("in b"));
        if na.class_type != nb.class_type {
            diff.changed_nodes.push(NodeChange {
                node: id.clone(),
                field: "class_type".into(),
            });
        }
        let extra_keys: BTreeSet<&String> = na.extra.keys().chain(nb.extra.keys()).collect();
        for key in extra_keys {
            if na.extra.get(key) != nb.extra.get(key) {
                diff.changed_nodes.push(NodeChange {
                    node: id.clone(),
                    field: key.clone(),
                });
            }
        }
        let names: BTreeSet<&String> = na.inputs.keys().chain(nb.inputs.keys()).collect();
        for name in names {
            let (before, after) = (na.inputs.get(name), nb.inputs.get(name));
            if before == after {
                continue;
            }
            let change = InputChange {
                node: id.clone(),
                input: name.clone(),
                before: before.cloned(),
                after: after.cloned(),
            };
            if before.is_some_and(InputValue::is_link) || after.is_some_and(InputValue::is_link) {
                diff.changed_links.push(change);
            } else {
                diff.changed_literals.push(change);
            }
        }
    }
    diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WorkflowNode;

    fn sampler(steps: i64) -> WorkflowGraph {
        WorkflowGraph::from_nodes([
            WorkflowNode::new("1", "Loader"),
            WorkflowNode::new("2", "KSampler")
                .with_input("steps", InputValue::literal(steps))
                .with_input("model", InputValue::link("1", 0)),
        ])
        .unwrap()
    }

    #[test]
    fn identical_graphs() {
        assert!(diff_graphs(&sampler(20), &sampler(20)).is_empty());
    }

    #[test]
    fn one_literal_change() {
        let d = diff_graphs(&sampler(20), &sampler(30));
        assert_eq!(d.changed_literals.len(), 1);
        assert_eq!(d.changed_literals[0].input, "steps");
        assert!(d.preserves_structure());
        assert_eq!(diff_graphs(&sampler(30), &sampler(20)), d.swapped());
    }

    #[test]
    fn rewired_link_and_added_node() {
        let a = sampler(20);
        let b = WorkflowGraph::from_nodes([
            WorkflowNode::new("1", "Loader"),
            WorkflowNode::new("3", "Loader"),
            WorkflowNode::new("2", "KSampler")
                .with_input("steps", InputValue::literal(20))
                .with_input("model", InputValue::link("3", 0)),
        ])
        .unwrap();
        let d = diff_graphs(&a, &b);
        assert_eq!(d.added, vec![NodeId::from("3")]);
        assert_eq!(d.changed_links.len(), 1);
        assert!(!d.preserves_structure());
        assert_eq!(diff_graphs(&b, &a), d.swapped());
    }
}
