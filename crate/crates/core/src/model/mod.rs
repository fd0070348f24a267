//! The two-stage generator.
//!
//! Stage one produces node features `F` (`[N, d]`, one row per node slot; the
//! transpose of the usual column layout) either from a causal decoder over
//! the serialized node sequence (text mode) or from `N` learnable queries
//! decoded without a causal mask (query mode). Stage two scores every ordered
//! pair of active slots from the difference `F[i] - F[j]`, with either a GRU
//! that spells out the relation or an MLP over the relation classes.

mod config;
mod network;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{EdgeMode, Imbalance, ModelConfig, NodeMode};
use network::{argmax, EdgeHead, Layout};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, normalize_text, sparsify_adjacency, AdjacencyTargets, Edge, KnowledgeGraph, Triple, TripleSet};
use crate::loss::{sequence_focal_batch, token_losses, LossBreakdown};
use crate::matching::{hungarian, matching_cost, Permutation};
use crate::tensor::{ParamStore, Tape, Tensor, Var};
use crate::vocab::{Vocab, EOS, NODE_SEP, NO_EDGE, NO_NODE, NUM_SPECIAL, PAD, UNK};

/// Label of edge class 0.
pub const NO_EDGE_CLASS: &str = "<no_edge>";

/// A training or evaluation example in model terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub text: String,
    /// Encoder input ids, end token included.
    pub input: Vec<usize>,
    /// Graph with normalized node and relation strings.
    pub graph: KnowledgeGraph,
    /// Token ids of each graph node (at most `node_tokens - 1`).
    pub node_ids: Vec<Vec<usize>>,
    /// Serialized node sequence `<pad> A <node_sep> B ... </s>`.
    pub serialized: Vec<usize>,
    /// Per node slot, the positions of its tokens in `serialized`.
    pub spans: Vec<Vec<usize>>,
    /// Per node slot, the target token sequence (end token included);
    /// empty slots target `<no_node>`.
    pub slot_targets: Vec<Vec<usize>>,
    /// Edge targets with graph node `k` in slot `k`.
    pub adjacency: AdjacencyTargets,
    /// Class id per cell (row-major), classification mode only.
    pub cell_classes: Vec<usize>,
    /// Label tokens per cell (end token included), generation mode only.
    pub cell_tokens: Vec<Vec<usize>>,
}

/// Result of [`GrapherModel::infer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub graph: KnowledgeGraph,
    /// Decoded string per node slot, `None` for empty slots and for
    /// duplicates of an earlier slot.
    pub slots: Vec<Option<String>>,
    /// Number of ordered slot pairs the edge head was evaluated on.
    pub edge_evaluations: usize,
}

/// Cross-attention of the node queries over the input, per decoder layer and head.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttention {
    /// Input tokens, end token included (the attention columns).
    pub tokens: Vec<String>,
    pub maps: Vec<AttentionMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub layer: usize,
    pub head: usize,
    /// `N` rows of `tokens.len()` weights each.
    pub weights: Vec<Vec<f64>>,
}

/// Column `i` minus column `j` of the node features: the edge-head input for
/// the direction `i -> j`. `features` is `[N, d]`.
pub fn pair_features(t: &mut Tape, features: Var, i: usize, j: usize) -> Result<Var> {
    if i == j {
        return Err(Error::invalid(format!("pair ({i}, {i}) is a self-edge")));
    }
    pair_rows(t, features, &[(i, j)])
}

fn pair_rows(t: &mut Tape, features: Var, cells: &[(usize, usize)]) -> Result<Var> {
    let is: Vec<usize> = cells.iter().map(|c| c.0).collect();
    let js: Vec<usize> = cells.iter().map(|c| c.1).collect();
    let a = t.gather_rows(features, &is)?;
    let b = t.gather_rows(features, &js)?;
    t.sub(a, b)
}

/// Everything about the network except its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    config: ModelConfig,
    vocab: Vocab,
    edge_labels: Vec<String>,
    layout: Layout,
}

/// A network together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GrapherModel {
    pub net: Net,
    pub params: ParamStore,
}

/// Vocabulary over normalized texts, node strings and relation labels.
pub fn build_vocab(examples: &[Example]) -> Result<Vocab> {
    let mut strings = Vec::new();
    for ex in examples {
        strings.push(normalize_text(&ex.text));
        for n in ex.graph.nodes() {
            strings.push(normalize_text(n));
        }
        for e in ex.graph.edges() {
            strings.push(normalize_text(&e.label));
        }
    }
    Vocab::build(strings.iter().map(String::as_str))
}

/// Edge classes: `<no_edge>` followed by the sorted normalized relation labels.
pub fn edge_labels(examples: &[Example]) -> Vec<String> {
    let labels: BTreeSet<String> = examples
        .iter()
        .flat_map(|ex| ex.graph.edges().iter().map(|e| normalize_text(&e.label)))
        .collect();
    core::iter::once(NO_EDGE_CLASS.to_string()).chain(labels).collect()
}

fn is_content(id: usize) -> bool {
    id >= NUM_SPECIAL || id == UNK
}

impl GrapherModel {
    /// Fresh model with parameters drawn from `seed`. The vocabulary and
    /// class counts in `config` are overwritten from the arguments.
    pub fn new(mut config: ModelConfig, vocab: Vocab, edge_labels: Vec<String>, seed: u64) -> Result<Self> {
        config.vocab_size = vocab.size();
        config.edge_classes = edge_labels.len();
        config.validate()?;
        if edge_labels.first().map(String::as_str) != Some(NO_EDGE_CLASS) {
            return Err(Error::config(format!("edge class 0 must be {NO_EDGE_CLASS}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layout = Layout::build(&config, &mut params, &mut rng);
        Ok(GrapherModel {
            net: Net {
                config,
                vocab,
                edge_labels,
                layout,
            },
            params,
        })
    }

    /// Model sized for `examples` (vocabulary and classes taken from them).
    pub fn for_examples(config: ModelConfig, examples: &[Example], seed: u64) -> Result<Self> {
        GrapherModel::new(config, build_vocab(examples)?, edge_labels(examples), seed)
    }

    /// Reassembles a model from stored parts; parameter names and shapes
    /// must match the layout implied by `config`.
    pub fn from_parts(config: ModelConfig, vocab: Vocab, edge_labels: Vec<String>, params: ParamStore) -> Result<Self> {
        let mut m = GrapherModel::new(config, vocab, edge_labels, 0)?;
        if m.params.len() != params.len() {
            return Err(Error::config(format!(
                "expected {} parameters, found {}",
                m.params.len(),
                params.len()
            )));
        }
        for ((_, want), (_, got)) in m.params.iter().zip(params.iter()) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::config(format!(
                    "parameter mismatch: expected {} {:?}, found {} {:?}",
                    want.name,
                    want.value.shape(),
                    got.name,
                    got.value.shape()
                )));
            }
        }
        m.params = params;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.net.vocab
    }

    pub fn edge_labels(&self) -> &[String] {
        &self.net.edge_labels
    }

    pub fn prepare(&self, ex: &Example) -> Result<Prepared> {
        self.net.prepare(ex)
    }

    /// Loss without dropout or edge sampling.
    pub fn loss(&self, ex: &Prepared) -> Result<LossBreakdown> {
        let mut t = Tape::with_params(&self.params);
        let (_, b) = self.net.example_loss(&mut t, ex, None)?;
        Ok(b)
    }

    pub fn infer(&self, text: &str) -> Result<Inference> {
        self.net.infer(&self.params, text)
    }

    pub fn infer_graph(&self, text: &str) -> Result<KnowledgeGraph> {
        Ok(self.infer(text)?.graph)
    }

    pub fn dump_cross_attention(&self, text: &str) -> Result<CrossAttention> {
        self.net.cross_attention(&self.params, text)
    }
}

impl Net {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Encoder ids for `text`: normalized, truncated to the input limit, end token appended.
    pub fn encode_input(&self, text: &str) -> Vec<usize> {
        let mut ids = self.vocab.encode(&normalize_text(text));
        let limit = self.config.max_input - 1;
        if ids.len() > limit {
            log::warn!("input of {} tokens truncated to {limit}", ids.len());
            ids.truncate(limit);
        }
        ids.push(EOS);
        ids
    }

    pub fn prepare(&self, ex: &Example) -> Result<Prepared> {
        let cfg = &self.config;
        let triples: Vec<Triple> = ex.graph.to_triples().triples.iter().map(Triple::normalized).collect();
        let mut graph = KnowledgeGraph::from_triples(&TripleSet::new(triples))?;
        // isolated nodes carry no triple; keep them
        if graph.nodes().len() < ex.graph.nodes().len() {
            let mut nodes = graph.nodes().to_vec();
            for n in ex.graph.nodes() {
                let n = normalize_text(n);
                if !nodes.contains(&n) && !n.is_empty() {
                    nodes.push(n);
                }
            }
            graph = KnowledgeGraph::new(nodes, graph.edges().to_vec())?;
        }
        let n = cfg.max_nodes;
        if graph.nodes().len() > n {
            return Err(Error::Capacity {
                what: "nodes",
                got: graph.nodes().len(),
                max: n,
            });
        }
        let node_ids: Vec<Vec<usize>> = graph
            .nodes()
            .iter()
            .map(|name| {
                let mut ids = self.vocab.encode(name);
                if ids.len() > cfg.node_tokens - 1 {
                    log::warn!("node {name:?} truncated to {} tokens", cfg.node_tokens - 1);
                    ids.truncate(cfg.node_tokens - 1);
                }
                ids
            })
            .collect();
        let mut serialized = vec![PAD];
        let mut spans = Vec::with_capacity(n);
        let mut slot_targets = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                serialized.push(NODE_SEP);
            }
            let toks = node_ids.get(k).cloned().unwrap_or_else(|| vec![NO_NODE]);
            let start = serialized.len();
            serialized.extend_from_slice(&toks);
            spans.push((start..serialized.len()).collect());
            let mut target = toks;
            target.push(EOS);
            slot_targets.push(target);
        }
        serialized.push(EOS);
        let order: Vec<usize> = (0..graph.nodes().len()).collect();
        let adjacency = build_adjacency(&graph, n, &order)?;
        let mut cell_classes = Vec::new();
        let mut cell_tokens = Vec::new();
        match cfg.edge_mode {
            EdgeMode::Classify => {
                cell_classes = vec![0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        if let Some(label) = adjacency.entry(i, j) {
                            cell_classes[i * n + j] = self.edge_class(label).ok_or_else(|| {
                                Error::invalid(format!("relation {label:?} is not one of the model's edge classes"))
                            })?;
                        }
                    }
                }
            }
            EdgeMode::Generate => {
                cell_tokens = vec![Vec::new(); n * n];
                for i in 0..n {
                    for j in 0..n {
                        let mut toks = match adjacency.entry(i, j) {
                            Some(label) => {
                                let mut ids = self.vocab.encode(label);
                                if ids.len() > cfg.edge_tokens - 1 {
                                    log::warn!("relation {label:?} truncated to {} tokens", cfg.edge_tokens - 1);
                                    ids.truncate(cfg.edge_tokens - 1);
                                }
                                ids
                            }
                            None => vec![NO_EDGE],
                        };
                        toks.push(EOS);
                        cell_tokens[i * n + j] = toks;
                    }
                }
            }
        }
        Ok(Prepared {
            text: ex.text.clone(),
            input: self.encode_input(&ex.text),
            graph,
            node_ids,
            serialized,
            spans,
            slot_targets,
            adjacency,
            cell_classes,
            cell_tokens,
        })
    }

    fn edge_class(&self, label: &str) -> Option<usize> {
        self.edge_labels.iter().skip(1).position(|l| l == label).map(|p| p + 1)
    }

    /// Total training loss of one example. With `rng`, the classification
    /// head applies dropout and sparse mode samples its `<no_edge>` cells;
    /// without it the loss is deterministic and uses the full mask.
    pub fn example_loss(&self, t: &mut Tape, ex: &Prepared, mut rng: Option<&mut dyn RngCore>) -> Result<(Var, LossBreakdown)> {
        let (node_loss, features) = self.node_stage(t, ex)?;
        let adjacency = match (self.config.imbalance, rng.as_deref_mut()) {
            (Imbalance::Sparse, Some(r)) => sparsify_adjacency(&ex.adjacency, self.config.k_noedge, r),
            _ => ex.adjacency.clone(),
        };
        let (edge_loss, real, none) = self.edge_stage(t, ex, features, &adjacency, rng)?;
        let total = t.add(node_loss, edge_loss)?;
        t.check_finite(total, "training loss")?;
        let b = LossBreakdown::new(t.scalar(node_loss), t.scalar(edge_loss), real, none);
        Ok((total, b))
    }

    /// Node loss and target-aligned node features `[N, d]`.
    fn node_stage(&self, t: &mut Tape, ex: &Prepared) -> Result<(Var, Var)> {
        let d = self.config.d_model;
        let memory = self.layout.encode(t, &ex.input, d)?;
        match self.config.node_mode {
            NodeMode::Text => {
                let len = ex.serialized.len() - 1;
                let x = self.layout.embed_positions(t, &ex.serialized[..len], d)?;
                let (h, _) = self.layout.decode(t, x, memory, true)?;
                let logits = self.layout.project(t, h, self.layout.node_out_bias)?;
                let losses = token_losses(t, logits, &ex.serialized[1..], 0.0)?;
                let node_loss = t.mean(losses)?;
                let features = t.pool_rows(h, ex.spans.clone())?;
                Ok((node_loss, features))
            }
            NodeMode::Query => {
                let head = self.layout.query.as_ref().expect("query head in query mode");
                let q = t.param(head.queries);
                let (features, _) = self.layout.decode(t, q, memory, false)?;
                let source = self.match_slots(t, features, &ex.slot_targets)?;
                let aligned = t.gather_rows(features, source.mapping())?;
                let s = self.config.node_tokens;
                let inputs = teacher_inputs(&ex.slot_targets, s);
                let logits = self
                    .layout
                    .recurrent_logits(t, aligned, &head.init, &head.gru, self.layout.node_out_bias, &inputs)?;
                let per_slot = sequence_focal_batch(t, logits, ex.slot_targets.len(), &ex.slot_targets, 0.0)?;
                let node_loss = t.mean(per_slot)?;
                Ok((node_loss, aligned))
            }
        }
    }

    /// Greedy-decodes every query slot on a detached copy of the features,
    /// scores it against every target, and returns the target→slot map of
    /// the minimum-cost matching.
    fn match_slots(&self, t: &Tape, features: Var, targets: &[Vec<usize>]) -> Result<Permutation> {
        let head = self.layout.query.as_ref().expect("query head in query mode");
        let store = t.params().expect("model tape has parameters");
        let mut scratch = Tape::with_params(store);
        let f = scratch.leaf(t.to_tensor(features));
        let (_, logits) = self.layout.recurrent_greedy(
            &mut scratch,
            f,
            &head.init,
            &head.gru,
            self.layout.node_out_bias,
            self.config.node_tokens,
            true,
        )?;
        let cost = matching_cost(&logits, self.config.vocab_size, targets)?;
        Ok(hungarian(&cost)?.inverse())
    }

    fn edge_stage(
        &self,
        t: &mut Tape,
        ex: &Prepared,
        features: Var,
        adjacency: &AdjacencyTargets,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(Var, usize, usize)> {
        let cells = adjacency.masked_cells();
        let n = adjacency.n();
        let real = cells.iter().filter(|&&(i, j)| adjacency.entry(i, j).is_some()).count();
        let none = cells.len() - real;
        if cells.is_empty() {
            let zero = t.leaf(Tensor::scalar(0.0));
            return Ok((zero, 0, 0));
        }
        let pairs = pair_rows(t, features, &cells)?;
        let gamma = self.config.edge_gamma();
        let loss = match &self.layout.edge {
            EdgeHead::Classify { .. } => {
                let logits = self.layout.classify(t, pairs, self.config.dropout, rng)?;
                let targets: Vec<usize> = cells.iter().map(|&(i, j)| ex.cell_classes[i * n + j]).collect();
                let l = token_losses(t, logits, &targets, gamma)?;
                t.mean(l)?
            }
            EdgeHead::Generate { init, gru, out_bias } => {
                let targets: Vec<Vec<usize>> = cells.iter().map(|&(i, j)| ex.cell_tokens[i * n + j].clone()).collect();
                let inputs = teacher_inputs(&targets, self.config.edge_tokens);
                let logits = self.layout.recurrent_logits(t, pairs, init, gru, *out_bias, &inputs)?;
                let l = sequence_focal_batch(t, logits, targets.len(), &targets, gamma)?;
                t.mean(l)?
            }
        };
        Ok((loss, real, none))
    }

    /// Node features `[N, d]` plus decoded slot token lists for `input`.
    fn infer_nodes(&self, t: &mut Tape, input: &[usize]) -> Result<(Var, Vec<Vec<usize>>)> {
        let d = self.config.d_model;
        let n = self.config.max_nodes;
        let memory = self.layout.encode(t, input, d)?;
        match self.config.node_mode {
            NodeMode::Text => {
                let mut seq = vec![PAD];
                for _ in 0..self.config.text_target_len() {
                    let x = self.layout.embed_positions(t, &seq, d)?;
                    let (h, _) = self.layout.decode(t, x, memory, true)?;
                    let last = t.slice_rows(h, seq.len() - 1, 1)?;
                    let logits = self.layout.project(t, last, self.layout.node_out_bias)?;
                    let next = argmax(t.value(logits));
                    if next == EOS {
                        break;
                    }
                    seq.push(next);
                }
                let x = self.layout.embed_positions(t, &seq, d)?;
                let (h, _) = self.layout.decode(t, x, memory, true)?;
                // split after the leading pad on separators, keeping positions
                let mut spans: Vec<Vec<usize>> = vec![Vec::new()];
                for (p, &tok) in seq.iter().enumerate().skip(1) {
                    if tok == NODE_SEP {
                        spans.push(Vec::new());
                    } else {
                        spans.last_mut().expect("non-empty").push(p);
                    }
                }
                spans.truncate(n);
                let slots: Vec<Vec<usize>> = spans.iter().map(|s| s.iter().map(|&p| seq[p]).collect()).collect();
                spans.resize(n, Vec::new());
                let features = t.pool_rows(h, spans)?;
                Ok((features, slots))
            }
            NodeMode::Query => {
                let head = self.layout.query.as_ref().expect("query head in query mode");
                let q = t.param(head.queries);
                let (features, _) = self.layout.decode(t, q, memory, false)?;
                let (slots, _) = self.layout.recurrent_greedy(
                    t,
                    features,
                    &head.init,
                    &head.gru,
                    self.layout.node_out_bias,
                    self.config.node_tokens,
                    false,
                )?;
                Ok((features, slots))
            }
        }
    }

    pub fn infer(&self, store: &ParamStore, text: &str) -> Result<Inference> {
        let mut t = Tape::with_params(store);
        let input = self.encode_input(text);
        let (features, slot_tokens) = self.infer_nodes(&mut t, &input)?;
        let n = self.config.max_nodes;
        let mut slots: Vec<Option<String>> = vec![None; n];
        let mut kept: Vec<usize> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        for (k, toks) in slot_tokens.iter().enumerate().take(n) {
            if toks.is_empty() || !toks.iter().all(|&x| is_content(x)) {
                continue;
            }
            let name = self.vocab.decode(toks);
            if name.is_empty() || names.contains(&name) {
                continue;
            }
            slots[k] = Some(name.clone());
            names.push(name);
            kept.push(k);
        }
        let mut cells = Vec::new();
        for (a, &i) in kept.iter().enumerate() {
            for (b, &j) in kept.iter().enumerate() {
                if i != j {
                    cells.push((a, b, i, j));
                }
            }
        }
        let mut edges = Vec::new();
        if !cells.is_empty() {
            let slot_pairs: Vec<(usize, usize)> = cells.iter().map(|c| (c.2, c.3)).collect();
            let pairs = pair_rows(&mut t, features, &slot_pairs)?;
            let labels: Vec<Option<String>> = match &self.layout.edge {
                EdgeHead::Classify { .. } => {
                    let logits = self.layout.classify(&mut t, pairs, 0.0, None)?;
                    let c = self.config.edge_classes;
                    t.value(logits)
                        .chunks(c)
                        .map(|row| match argmax(row) {
                            0 => None,
                            k => Some(self.edge_labels[k].clone()),
                        })
                        .collect()
                }
                EdgeHead::Generate { init, gru, out_bias } => {
                    let (toks, _) =
                        self.layout
                            .recurrent_greedy(&mut t, pairs, init, gru, *out_bias, self.config.edge_tokens, false)?;
                    toks.iter()
                        .map(|seq| {
                            if seq.is_empty() || !seq.iter().all(|&x| is_content(x)) {
                                None
                            } else {
                                Some(self.vocab.decode(seq)).filter(|s| !s.is_empty())
                            }
                        })
                        .collect()
                }
            };
            for (cell, label) in cells.iter().zip(labels) {
                if let Some(label) = label {
                    edges.push(Edge {
                        src: cell.0,
                        label,
                        dst: cell.1,
                    });
                }
            }
        }
        Ok(Inference {
            graph: KnowledgeGraph::new(names, edges)?,
            slots,
            edge_evaluations: cells.len(),
        })
    }

    pub fn cross_attention(&self, store: &ParamStore, text: &str) -> Result<CrossAttention> {
        if self.config.node_mode != NodeMode::Query {
            return Err(Error::invalid("cross-attention inspection needs a query-mode model"));
        }
        let head = self.layout.query.as_ref().expect("query head in query mode");
        let mut t = Tape::with_params(store);
        let input = self.encode_input(text);
        let memory = self.layout.encode(&mut t, &input, self.config.d_model)?;
        let q = t.param(head.queries);
        let (_, captured) = self.layout.decode(&mut t, q, memory, false)?;
        let cols = input.len();
        let maps = captured
            .into_iter()
            .map(|c| AttentionMap {
                layer: c.layer,
                head: c.head,
                weights: t.value(c.weights).chunks(cols).map(<[f64]>::to_vec).collect(),
            })
            .collect();
        Ok(CrossAttention {
            tokens: input.iter().map(|&i| self.vocab.token(i).to_string()).collect(),
            maps,
        })
    }

    /// Query-mode node features for `input`, for inspection and tests.
    pub fn query_features(&self, t: &mut Tape, input: &[usize]) -> Result<Var> {
        let head = self.layout.query.as_ref().ok_or_else(|| Error::invalid("not a query-mode model"))?;
        let memory = self.layout.encode(t, input, self.config.d_model)?;
        let q = t.param(head.queries);
        Ok(self.layout.decode(t, q, memory, false)?.0)
    }

    /// Query embedding parameter, if any.
    pub fn query_param(&self) -> Option<crate::tensor::ParamId> {
        self.layout.query.as_ref().map(|q| q.queries)
    }
}

/// Teacher-forcing inputs: step 0 feeds `<pad>`, step `s` feeds token `s - 1`
/// of each target (end token past its end).
fn teacher_inputs(targets: &[Vec<usize>], steps: usize) -> Vec<Vec<usize>> {
    (0..steps)
        .map(|s| {
            targets
                .iter()
                .map(|seq| if s == 0 { PAD } else { seq.get(s - 1).copied().unwrap_or(EOS) })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusSpec};
    use crate::graph::serialize_nodes;
    use crate::graph::SpecialTokens;

    fn tiny(node: NodeMode, edge: EdgeMode) -> (GrapherModel, Vec<Prepared>) {
        let corpus = generate_corpus(&CorpusSpec::demo(), 5).unwrap();
        let mut cfg = ModelConfig::new(node, edge);
        cfg.d_model = 16;
        cfg.d_ff = 16;
        cfg.edge_hidden = 16;
        cfg.layers = 1;
        let m = GrapherModel::for_examples(cfg, &corpus.train, 1).unwrap();
        let prepared = corpus.train[..3].iter().map(|e| m.prepare(e).unwrap()).collect();
        (m, prepared)
    }

    #[test]
    fn serialized_target_matches_node_serialization() {
        let (m, prepared) = tiny(NodeMode::Text, EdgeMode::Classify);
        for p in &prepared {
            let s = serialize_nodes(&p.graph, m.config().max_nodes, &SpecialTokens::default()).unwrap();
            assert_eq!(m.vocab().encode(&s), p.serialized);
        }
    }

    #[test]
    fn every_mode_pair_gives_finite_losses() {
        for node in [NodeMode::Text, NodeMode::Query] {
            for edge in [EdgeMode::Classify, EdgeMode::Generate] {
                let (m, prepared) = tiny(node, edge);
                for p in &prepared {
                    let b = m.loss(p).unwrap();
                    assert!(b.is_finite());
                    assert_eq!(b.total, b.node_loss + b.edge_loss);
                    let n = p.graph.nodes().len();
                    assert_eq!(b.edge_terms(), n * (n - 1));
                }
                let inf = m.infer(&prepared[0].text).unwrap();
                assert_eq!(inf.slots.len(), m.config().max_nodes);
            }
        }
    }

    #[test]
    fn pair_features_reject_self_pairs() {
        let mut t = Tape::new();
        let f = t.leaf(Tensor::zeros(vec![3, 2]));
        assert!(pair_features(&mut t, f, 1, 1).is_err());
    }

    #[test]
    fn cross_attention_needs_query_mode() {
        let (m, _) = tiny(NodeMode::Text, EdgeMode::Classify);
        assert!(m.dump_cross_attention("Ada knows Bob.").is_err());
    }

    #[test]
    fn teacher_inputs_shift_targets() {
        let inputs = teacher_inputs(&[vec![7, 8, EOS], vec![NO_NODE, EOS]], 4);
        assert_eq!(inputs, vec![vec![PAD, PAD], vec![7, NO_NODE], vec![8, EOS], vec![EOS, EOS]]);
    }
}
