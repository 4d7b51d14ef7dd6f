//! Graphviz DOT rendering of conversation graphs, optionally annotated with
//! attention weights. Follows the figure convention: self-loops are not
//! drawn, so per-destination edge labels sum to one minus the self-loop
//! weight.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::{ConversationGraph, EdgeKind};

/// Render `graph` as a DOT digraph. `attention`, when given, must be keyed
/// by (src, dst) node-index pairs that are either stored edges or self-loops
/// (src == dst); self-loop entries are accepted and omitted from the drawing.
/// `texts` supplies optional node captions keyed by comment id.
pub fn export_dot(
    graph: &ConversationGraph,
    attention: Option<&BTreeMap<(usize, usize), f64>>,
    texts: Option<&HashMap<String, String>>,
) -> Result<String> {
    if let Some(att) = attention {
        for &(s, d) in att.keys() {
            let in_graph = s == d || graph.has_edge(s, d);
            if s >= graph.nodes.len() || d >= graph.nodes.len() || !in_graph {
                return Err(Error::Argument(format!(
                    "attention key ({}, {}) is not an edge or self-loop of the graph",
                    s, d
                )));
            }
        }
    }

    let mut out = String::new();
    out.push_str("digraph conversation {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=ellipse, fontsize=10];\n");

    for (i, id) in graph.nodes.iter().enumerate() {
        let mut label = id.clone();
        if let Some(texts) = texts {
            if let Some(text) = texts.get(id) {
                label = format!("{}\\n{}", id, truncate(text, 40));
            }
        }
        let mut attrs = format!("label=\"{}\"", escape(&label));
        if i == graph.target_index {
            attrs.push_str(", style=filled, fillcolor=orange");
        } else if i == 0 {
            attrs.push_str(", shape=box");
        }
        out.push_str(&format!("  n{} [{}];\n", i, attrs));
    }

    // one drawn arrow per unique (src, dst) pair, styled by the most
    // specific stored kind
    let mut pairs: BTreeMap<(usize, usize), EdgeKind> = BTreeMap::new();
    for &(s, d, k) in &graph.edges {
        let entry = pairs.entry((s, d)).or_insert(k);
        if kind_priority(k) < kind_priority(*entry) {
            *entry = k;
        }
    }
    for (&(s, d), &kind) in &pairs {
        let mut attrs: Vec<String> = Vec::new();
        match kind {
            EdgeKind::Reply => {}
            EdgeKind::PostLink => attrs.push("style=dashed, color=gray40".into()),
            EdgeKind::Temporal => attrs.push("style=dotted, color=blue".into()),
            EdgeKind::Reverse => attrs.push("color=gray70".into()),
        }
        if let Some(att) = attention {
            if let Some(w) = att.get(&(s, d)) {
                attrs.push(format!("label=\"{:.4}\"", w));
            }
        }
        if attrs.is_empty() {
            out.push_str(&format!("  n{} -> n{};\n", s, d));
        } else {
            out.push_str(&format!("  n{} -> n{} [{}];\n", s, d, attrs.join(", ")));
        }
    }
    out.push_str("}\n");
    Ok(out)
}

fn kind_priority(k: EdgeKind) -> u8 {
    match k {
        EdgeKind::Reply => 0,
        EdgeKind::PostLink => 1,
        EdgeKind::Temporal => 2,
        EdgeKind::Reverse => 3,
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn truncate(s: &str, max_chars: usize) -> String {
    if s.chars().count() <= max_chars {
        s.to_string()
    } else {
        let head: String = s.chars().take(max_chars).collect();
        format!("{}...", head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{affordance_trim, TrimConfig};
    use crate::thread::fixtures::{comment, fixture_thread};
    use crate::thread::ConversationThread;

    fn two_node_graph() -> ConversationGraph {
        let mut warnings = Vec::new();
        let t = ConversationThread::new(
            "t1".into(),
            vec![comment("p", None, 0, 1), comment("t", Some("p"), 0, 2)],
            &mut warnings,
        )
        .unwrap();
        affordance_trim(&t, "t", &TrimConfig::default()).unwrap()
    }

    #[test]
    fn two_nodes_no_attention() {
        let g = two_node_graph();
        let dot = export_dot(&g, None, None).unwrap();
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("n0"));
        assert!(dot.contains("n1"));
        assert!(dot.contains("n0 -> n1"));
        assert!(!dot.contains("label=\"0."));
        assert!(dot.contains("fillcolor=orange"));
    }

    #[test]
    fn uniform_attention_labels() {
        let g = two_node_graph();
        // destination t: in-edge from p plus the self-loop; pretend another
        // in-edge existed so the uniform value is one third
        let mut att = BTreeMap::new();
        att.insert((0, 1), 1.0 / 3.0);
        att.insert((1, 1), 1.0 / 3.0); // self-loop, not drawn
        let dot = export_dot(&g, Some(&att), None).unwrap();
        assert!(dot.contains("label=\"0.3333\""));
        // self-loop not drawn
        assert!(!dot.contains("n1 -> n1"));
    }

    #[test]
    fn unknown_attention_key_errors() {
        let g = two_node_graph();
        let mut att = BTreeMap::new();
        att.insert((1, 0), 0.5); // no stored edge t -> p
        assert!(matches!(
            export_dot(&g, Some(&att), None),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn parallel_kinds_drawn_once() {
        let g = two_node_graph(); // p->t stored as reply and post_link
        let dot = export_dot(&g, None, None).unwrap();
        assert_eq!(dot.matches("n0 -> n1").count(), 1);
    }

    #[test]
    fn node_texts_and_escaping() {
        let g = two_node_graph();
        let mut texts = HashMap::new();
        texts.insert("t".to_string(), "he said \"no u\"".to_string());
        let dot = export_dot(&g, None, Some(&texts)).unwrap();
        assert!(dot.contains("\\\"no u\\\""));
    }

    #[test]
    fn fixture_graph_renders_all_nodes() {
        let t = fixture_thread();
        let g = affordance_trim(&t, "t", &TrimConfig::default()).unwrap();
        let dot = export_dot(&g, None, None).unwrap();
        for i in 0..g.nodes.len() {
            assert!(dot.contains(&format!("n{} [", i)));
        }
    }
}
