//! Benchmarks live in `benches/`; this crate only holds shared inputs.

use std::path::PathBuf;

use atelier_core::graph::{InputValue, WorkflowGraph, WorkflowNode};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// A layered DAG of `n` nodes where node `i` links to up to two earlier
/// nodes picked by `pick`.
pub fn layered_graph(n: usize, mut pick: impl FnMut(usize) -> usize) -> WorkflowGraph {
    let nodes = (0..n).map(|i| {
        let mut node = WorkflowNode::new(format!("{i}"), "Op");
        if i > 0 {
            node = node
                .with_input("a", InputValue::link(format!("{}", pick(i)), 0))
                .with_input("b", InputValue::link(format!("{}", pick(i)), 0));
        }
        node.with_input("k", InputValue::literal(i as u64))
    });
    WorkflowGraph::from_nodes(nodes).expect("generated ids are unique")
}
