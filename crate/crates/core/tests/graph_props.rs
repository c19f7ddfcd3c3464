mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use atelier_core::graph::{
    diff_graphs, parse_workflow, serialize_workflow, topological_order, validate_dag, InputValue, WorkflowGraph,
    WorkflowNode,
};
use common::{fixtures, library};

fn layered(n: usize, links: &[(usize, usize)], texts: &[String]) -> WorkflowGraph {
    let nodes = (0..n).map(|v| {
        let mut node = WorkflowNode::new(format!("{}", v + 1), "Op")
            .with_input("text", InputValue::literal(texts[v % texts.len()].clone()))
            .with_input("scale", InputValue::literal(v as f64 / 4.0));
        for (i, (a, b)) in links.iter().enumerate() {
            let (a, b) = (a % n, b % n);
            if a < b && b == v {
                node = node.with_input(format!("in{i}"), InputValue::link(format!("{}", a + 1), i as u32 % 3));
            }
        }
        node
    });
    WorkflowGraph::from_nodes(nodes).unwrap()
}

proptest! {
    #[test]
    fn serialization_round_trips(
        n in 1usize..20,
        links in proptest::collection::vec((0usize..20, 0usize..20), 0..40),
        texts in proptest::collection::vec("[ -~]{0,12}", 1..4),
    ) {
        let g = layered(n, &links, &texts);
        let text = serialize_workflow(&g);
        let back = parse_workflow(text.as_bytes()).unwrap();
        prop_assert_eq!(serialize_workflow(&back), text);
        prop_assert!(diff_graphs(&g, &back).is_empty());
    }

    #[test]
    fn forward_links_are_always_acyclic(
        n in 1usize..20,
        links in proptest::collection::vec((0usize..20, 0usize..20), 0..40),
    ) {
        let g = layered(n, &links, &["x".to_string()]);
        prop_assert!(validate_dag(&g, true).is_clean());
        let order = topological_order(&g).unwrap();
        prop_assert_eq!(order.len(), n);
    }

    #[test]
    fn diff_is_antisymmetric(
        n in 1usize..12,
        a in proptest::collection::vec((0usize..12, 0usize..12), 0..20),
        b in proptest::collection::vec((0usize..12, 0usize..12), 0..20),
    ) {
        let (ga, gb) = (layered(n, &a, &["a".into()]), layered(n, &b, &["b".into()]));
        prop_assert_eq!(diff_graphs(&gb, &ga), diff_graphs(&ga, &gb).swapped());
    }
}

#[test]
fn fixture_library_is_complete() {
    let lib = library();
    assert_eq!(lib.len(), 12);
    let sites: usize = lib.iter().map(|w| w.template.placeholder_sites().len()).sum();
    assert_eq!(sites, 19);
    let ctx = lib.render_context();
    for name in lib.names() {
        assert!(ctx.contains(&format!("## {name}\n")));
    }
    assert!(!ctx.contains("__PARAM:"));
    let kinds: BTreeSet<_> = lib.iter().map(|w| w.descriptor.task_kind).collect();
    assert_eq!(kinds.len(), 6);
}

#[test]
fn cycle_fixture_is_rejected_with_its_nodes() {
    let g = parse_workflow(&std::fs::read(fixtures().join("cycle.json")).unwrap()).unwrap();
    assert!(topological_order(&g).is_err());
    assert!(!validate_dag(&g, false).is_clean());
}
