use std::collections::HashMap;
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::{InputValue, NodeId, WorkflowGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FindingKind {
    Cycle,
    DanglingLink,
    UnboundPlaceholder,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingKind::Cycle => "cycle",
            FindingKind::DanglingLink => "dangling-link",
            FindingKind::UnboundPlaceholder => "unbound-placeholder",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub kind: FindingKind,
    pub nodes: Vec<NodeId>,
    pub detail: String,
}

/// `FINDING <kind> <comma-separated node ids>`
impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<&str> = self.nodes.iter().map(NodeId::as_str).collect();
        write!(f, "FINDING {} {}", self.kind, ids.join(","))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has(&self, kind: FindingKind) -> bool {
        self.findings.iter().any(|f| f.kind == kind)
    }
}

/// Checks acyclicity and link resolution; with `require_concrete`, also
/// reports every input still holding a placeholder. Findings are ordered by
/// kind, then by node ids.
pub fn validate_dag(graph: &WorkflowGraph, require_concrete: bool) -> ValidationReport {
    let mut findings = Vec::new();

    for node in graph.nodes() {
        for (input, link) in node.links() {
            if !graph.contains(&link.source) {
                findings.push(Finding {
                    kind: FindingKind::DanglingLink,
                    nodes: vec![node.id.clone(), link.source.clone()],
                    detail: format!("input {input} of node {} links to missing node {}", node.id, link.source),
                });
            }
        }
    }

    for component in cyclic_components(graph) {
        findings.push(Finding {
            kind: FindingKind::Cycle,
            detail: format!("cycle through {} node(s)", component.len()),
            nodes: component,
        });
    }

    if require_concrete {
        for node in graph.nodes() {
            for (input, value) in &node.inputs {
                if let InputValue::Placeholder(key) = value {
                    findings.push(Finding {
                        kind: FindingKind::UnboundPlaceholder,
                        nodes: vec![node.id.clone()],
                        detail: format!("input {input} still holds placeholder {key}"),
                    });
                }
            }
        }
    }

    findings.sort_by(|a, b| (a.kind, &a.nodes).cmp(&(b.kind, &b.nodes)));
    ValidationReport { findings }
}

/// Strongly connected components that contain a cycle (size > 1, or a
/// self-loop), each sorted by node id.
pub(crate) fn cyclic_components(graph: &WorkflowGraph) -> Vec<Vec<NodeId>> {
    let mut g = DiGraph::<&NodeId, ()>::new();
    let mut index = HashMap::new();
    for id in graph.node_ids() {
        index.insert(id, g.add_node(id));
    }
    let mut self_loops = Vec::new();
    for (src, dst) in graph.edges() {
        if let (Some(&a), Some(&b)) = (index.get(&src), index.get(&dst)) {
            if a == b {
                self_loops.push(a);
            }
            g.add_edge(a, b, ());
        }
    }
    let mut out: Vec<Vec<NodeId>> = tarjan_scc(&g)
        .into_iter()
        .filter(|c| c.len() > 1 || self_loops.contains(&c[0]))
        .map(|c| {
            let mut ids: Vec<NodeId> = c.into_iter().map(|i| g[i].clone()).collect();
            ids.sort();
            ids
        })
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WorkflowNode;

    fn chain(edges: &[(&str, &str)], ids: &[&str]) -> WorkflowGraph {
        let nodes = ids.iter().map(|id| {
            let mut n = WorkflowNode::new(*id, "Op");
            for (i, (src, dst)) in edges.iter().enumerate() {
                if dst == id {
                    n = n.with_input(format!("in{i}"), InputValue::link(*src, 0));
                }
            }
            n
        });
        WorkflowGraph::from_nodes(nodes).unwrap()
    }

    #[test]
    fn linear_chain_is_clean() {
        let g = chain(&[("A", "B"), ("B", "C")], &["A", "B", "C"]);
        assert!(validate_dag(&g, true).is_clean());
    }

    #[test]
    fn two_node_cycle() {
        let g = chain(&[("A", "B"), ("B", "A")], &["A", "B"]);
        let report = validate_dag(&g, false);
        assert_eq!(report.findings.len(), 1);
        assert_eq!(report.findings[0].kind, FindingKind::Cycle);
        assert_eq!(report.findings[0].nodes, vec![NodeId::from("A"), NodeId::from("B")]);
        assert_eq!(report.findings[0].to_string(), "FINDING cycle A,B");
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let g = chain(&[("A", "A")], &["A"]);
        assert!(validate_dag(&g, false).has(FindingKind::Cycle));
    }

    #[test]
    fn dangling_link_and_placeholder() {
        let g = WorkflowGraph::from_nodes([WorkflowNode::new("1", "X")
            .with_input("a", InputValue::link("99", 0))
            .with_input("p", InputValue::Placeholder("prompt".into()))])
        .unwrap();
        let loose = validate_dag(&g, false);
        assert_eq!(loose.findings.len(), 1);
        assert_eq!(loose.findings[0].kind, FindingKind::DanglingLink);
        let strict = validate_dag(&g, true);
        assert!(strict.has(FindingKind::UnboundPlaceholder));
        assert_eq!(strict.findings.len(), 2);
    }
}
