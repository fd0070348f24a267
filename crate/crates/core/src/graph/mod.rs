//! Knowledge-graph data model and the conversions around it.

mod adjacency;
mod normalize;
mod serialize;

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use adjacency::{build_adjacency, sparsify_adjacency, AdjacencyTargets};
pub use normalize::{fold_char, normalize_text, normalize_text_counted};
pub use serialize::{deserialize_nodes, serialize_nodes, NodeSlot, SpecialTokens};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: impl Into<String>) -> Self {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }

    /// Elements in role order: subject, predicate, object.
    pub fn elements(&self) -> [&str; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn normalized(&self) -> Triple {
        Triple {
            subject: normalize_text(&self.subject),
            predicate: normalize_text(&self.predicate),
            object: normalize_text(&self.object),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleSet {
    pub triples: Vec<Triple>,
}

impl TripleSet {
    pub fn new(triples: Vec<Triple>) -> Self {
        TripleSet { triples }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

impl From<Vec<Triple>> for TripleSet {
    fn from(triples: Vec<Triple>) -> Self {
        TripleSet { triples }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub label: String,
    pub dst: usize,
}

/// Unique node strings plus directed labelled edges between them.
///
/// Invariants: node strings are unique and non-empty, edge endpoints are in
/// range and distinct, and each ordered node pair carries at most one edge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    nodes: Vec<String>,
    edges: Vec<Edge>,
}

impl KnowledgeGraph {
    pub fn new(nodes: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for node in &nodes {
            if node.is_empty() {
                return Err(Error::invalid("empty node string"));
            }
            if !seen.insert(node.as_str()) {
                return Err(Error::invalid(format!("duplicate node {node:?}")));
            }
        }
        let mut pairs = BTreeSet::new();
        for e in &edges {
            if e.src >= nodes.len() || e.dst >= nodes.len() {
                return Err(Error::invalid(format!(
                    "edge {}->{} out of range for {} nodes",
                    e.src,
                    e.dst,
                    nodes.len()
                )));
            }
            if e.src == e.dst {
                return Err(Error::invalid(format!("self-edge on node {}", e.src)));
            }
            if !pairs.insert((e.src, e.dst)) {
                return Err(Error::invalid(format!("second edge on pair {}->{}", e.src, e.dst)));
            }
        }
        Ok(KnowledgeGraph { nodes, edges })
    }

    pub fn empty() -> Self {
        KnowledgeGraph::default()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn edge_label(&self, src: usize, dst: usize) -> Option<&str> {
        self.edges
            .iter()
            .find(|e| e.src == src && e.dst == dst)
            .map(|e| e.label.as_str())
    }

    /// Builds a graph from triples. Nodes are ordered by first appearance
    /// (subject before object within a triple); repeated node strings merge.
    pub fn from_triples(triples: &TripleSet) -> Result<Self> {
        let mut nodes: Vec<String> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut intern = |name: &str, nodes: &mut Vec<String>| -> usize {
            if let Some(&i) = index.get(name) {
                return i;
            }
            nodes.push(name.into());
            index.insert(name.into(), nodes.len() - 1);
            nodes.len() - 1
        };
        for t in &triples.triples {
            if t.subject.is_empty() || t.object.is_empty() {
                return Err(Error::invalid(format!("empty subject or object in {t:?}")));
            }
            if t.subject == t.object {
                return Err(Error::invalid(format!("self-referential triple {t:?}")));
            }
            let s = intern(&t.subject, &mut nodes);
            let o = intern(&t.object, &mut nodes);
            match edges.iter().find(|e| e.src == s && e.dst == o) {
                Some(e) if e.label == t.predicate => {}
                Some(e) => {
                    return Err(Error::invalid(format!(
                        "conflicting predicates {:?} and {:?} for ({:?}, {:?})",
                        e.label, t.predicate, t.subject, t.object
                    )))
                }
                None => edges.push(Edge {
                    src: s,
                    label: t.predicate.clone(),
                    dst: o,
                }),
            }
        }
        Ok(KnowledgeGraph { nodes, edges })
    }

    pub fn to_triples(&self) -> TripleSet {
        self.edges
            .iter()
            .map(|e| Triple::new(self.nodes[e.src].clone(), e.label.clone(), self.nodes[e.dst].clone()))
            .collect::<Vec<_>>()
            .into()
    }

    /// Equality up to node ordering: same node strings, same labelled edges.
    pub fn same_graph(&self, other: &KnowledgeGraph) -> bool {
        let nodes_a: BTreeSet<&str> = self.nodes.iter().map(String::as_str).collect();
        let nodes_b: BTreeSet<&str> = other.nodes.iter().map(String::as_str).collect();
        let mut ta = self.to_triples().triples;
        let mut tb = other.to_triples().triples;
        ta.sort();
        tb.sort();
        nodes_a == nodes_b && ta == tb
    }
}

pub fn graph_to_triples(g: &KnowledgeGraph) -> TripleSet {
    g.to_triples()
}

pub fn triples_to_graph(t: &TripleSet) -> Result<KnowledgeGraph> {
    KnowledgeGraph::from_triples(t)
}
