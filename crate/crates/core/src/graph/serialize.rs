//! Node-sequence serialization: `<pad> A <node_sep> B ... </s>`, padded with
//! `<no_node>` to a fixed number of slots.

use alloc::string::String;
use alloc::vec::Vec;

use super::KnowledgeGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTokens {
    pub pad: String,
    pub eos: String,
    pub node_sep: String,
    pub no_node: String,
    pub no_edge: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            pad: "<pad>".into(),
            eos: "</s>".into(),
            node_sep: "<node_sep>".into(),
            no_node: "<no_node>".into(),
            no_edge: "<no_edge>".into(),
        }
    }
}

impl SpecialTokens {
    pub fn all(&self) -> [&str; 5] {
        [&self.pad, &self.eos, &self.node_sep, &self.no_node, &self.no_edge]
    }

    pub fn is_special(&self, token: &str) -> bool {
        self.all().contains(&token)
    }

    /// True when `s` contains one of the special symbols as a whitespace token.
    pub fn contains_special(&self, s: &str) -> bool {
        s.split_whitespace().any(|t| self.is_special(t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeSlot {
    Active(String),
    /// A `<no_node>` filler or an empty segment.
    Inactive,
}

impl NodeSlot {
    pub fn as_active(&self) -> Option<&str> {
        match self {
            NodeSlot::Active(s) => Some(s),
            NodeSlot::Inactive => None,
        }
    }
}

pub fn serialize_nodes(g: &KnowledgeGraph, n_max: usize, sp: &SpecialTokens) -> Result<String> {
    let nodes = g.nodes();
    if nodes.len() > n_max {
        return Err(Error::Capacity {
            what: "nodes",
            got: nodes.len(),
            max: n_max,
        });
    }
    if let Some(bad) = nodes.iter().find(|n| sp.contains_special(n)) {
        return Err(Error::invalid(alloc::format!("node {bad:?} contains a special token")));
    }
    let mut slots: Vec<&str> = nodes.iter().map(String::as_str).collect();
    slots.resize(n_max, &sp.no_node);
    let sep = alloc::format!(" {} ", sp.node_sep);
    let mut out = String::new();
    out.push_str(&sp.pad);
    if !slots.is_empty() {
        out.push(' ');
        out.push_str(&slots.join(&sep));
    }
    out.push(' ');
    out.push_str(&sp.eos);
    Ok(out)
}

/// Parses a (possibly malformed) node sequence into exactly `n_max` slots.
///
/// Leading pads are skipped, everything after the first eos is ignored, and
/// missing eos means "parse to the end". Extra segments are truncated, missing
/// ones are inactive.
pub fn deserialize_nodes(s: &str, n_max: usize, sp: &SpecialTokens) -> Vec<NodeSlot> {
    let mut slots = Vec::with_capacity(n_max);
    let mut current: Vec<&str> = Vec::new();
    let mut started = false;
    let flush = |current: &mut Vec<&str>, slots: &mut Vec<NodeSlot>| {
        let words: Vec<&str> = current
            .drain(..)
            .filter(|t| *t != sp.pad.as_str())
            .collect();
        let slot = if words.is_empty() || words.iter().all(|t| *t == sp.no_node.as_str()) {
            NodeSlot::Inactive
        } else {
            NodeSlot::Active(words.join(" "))
        };
        slots.push(slot);
    };
    for tok in s.split_whitespace() {
        if !started && tok == sp.pad {
            continue;
        }
        started = true;
        if tok == sp.eos {
            break;
        }
        if tok == sp.node_sep {
            flush(&mut current, &mut slots);
        } else {
            current.push(tok);
        }
    }
    if started && (!current.is_empty() || !slots.is_empty()) {
        flush(&mut current, &mut slots);
    }
    slots.truncate(n_max);
    slots.resize(n_max, NodeSlot::Inactive);
    slots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, KnowledgeGraph};
    use alloc::vec;
    use proptest::prelude::*;

    fn nodes(names: &[&str]) -> KnowledgeGraph {
        KnowledgeGraph::new(names.iter().map(|s| String::from(*s)).collect(), vec![]).unwrap()
    }

    #[test]
    fn exact_format() {
        let sp = SpecialTokens::default();
        assert_eq!(
            serialize_nodes(&nodes(&["A", "B"]), 2, &sp).unwrap(),
            "<pad> A <node_sep> B </s>"
        );
        assert_eq!(
            serialize_nodes(&nodes(&["A"]), 3, &sp).unwrap(),
            "<pad> A <node_sep> <no_node> <node_sep> <no_node> </s>"
        );
    }

    #[test]
    fn capacity_error() {
        let sp = SpecialTokens::default();
        let r = serialize_nodes(&nodes(&["A", "B", "C"]), 2, &sp);
        assert!(matches!(r, Err(Error::Capacity { got: 3, max: 2, .. })));
    }

    #[test]
    fn special_token_inside_node_rejected() {
        let sp = SpecialTokens::default();
        assert!(serialize_nodes(&nodes(&["A <node_sep> B"]), 2, &sp).is_err());
    }

    #[test]
    fn parse_basic_and_missing_eos() {
        let sp = SpecialTokens::default();
        let a = NodeSlot::Active("A".into());
        let b = NodeSlot::Active("B".into());
        assert_eq!(deserialize_nodes("<pad> A <node_sep> B </s>", 2, &sp), vec![a.clone(), b.clone()]);
        assert_eq!(deserialize_nodes("<pad> A <node_sep> B", 2, &sp), vec![a.clone(), b]);
        assert_eq!(
            deserialize_nodes("<pad> A </s> <node_sep> junk", 3, &sp),
            vec![a, NodeSlot::Inactive, NodeSlot::Inactive]
        );
    }

    #[test]
    fn overlong_output_truncated() {
        let sp = SpecialTokens::default();
        let segs: Vec<String> = (0..10).map(|i| alloc::format!("n{i}")).collect();
        let s = alloc::format!("<pad> {} </s>", segs.join(" <node_sep> "));
        let slots = deserialize_nodes(&s, 8, &sp);
        assert_eq!(slots.len(), 8);
        assert_eq!(slots[7], NodeSlot::Active("n7".into()));
    }

    #[test]
    fn garbage_degrades_to_inactive() {
        let sp = SpecialTokens::default();
        assert_eq!(deserialize_nodes("", 2, &sp), vec![NodeSlot::Inactive; 2]);
        assert_eq!(deserialize_nodes("</s>", 2, &sp), vec![NodeSlot::Inactive; 2]);
        assert_eq!(
            deserialize_nodes("<node_sep> <node_sep> X", 3, &sp),
            vec![NodeSlot::Inactive, NodeSlot::Inactive, NodeSlot::Active("X".into())]
        );
    }

    #[test]
    fn edges_do_not_affect_serialization() {
        let sp = SpecialTokens::default();
        let g = KnowledgeGraph::new(
            vec!["A".into(), "B".into()],
            vec![Edge { src: 0, label: "r".into(), dst: 1 }],
        )
        .unwrap();
        assert_eq!(serialize_nodes(&g, 2, &sp).unwrap(), "<pad> A <node_sep> B </s>");
    }

    proptest! {
        #[test]
        fn round_trip(names in proptest::collection::btree_set("[a-z]{1,5}( [a-z]{1,5}){0,2}", 0..=8), n_max in 8usize..=10) {
            let sp = SpecialTokens::default();
            let names: Vec<String> = names.into_iter().collect();
            let g = KnowledgeGraph::new(names.clone(), vec![]).unwrap();
            let s = serialize_nodes(&g, n_max, &sp).unwrap();
            let slots = deserialize_nodes(&s, n_max, &sp);
            prop_assert_eq!(slots.len(), n_max);
            let active: Vec<String> = slots.iter().filter_map(|s| s.as_active().map(String::from)).collect();
            prop_assert_eq!(active, names);
        }
    }
}
