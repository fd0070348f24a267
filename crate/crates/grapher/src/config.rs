//! Run and corpus configuration from key-value files.

use std::collections::BTreeMap;

use grapher_core::corpus::{CorpusSpec, Relation};
use grapher_core::train::TrainConfig;
use grapher_core::{EdgeMode, ModelConfig, NodeMode};

use crate::kv::KvFile;

/// Model plus trainer settings. `seed` is mandatory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

pub const RUN_KEYS: &[&str] = &[
    "seed",
    "node_mode",
    "edge_mode",
    "imbalance",
    "d_model",
    "layers",
    "heads",
    "d_ff",
    "max_nodes",
    "node_tokens",
    "edge_tokens",
    "max_input",
    "edge_hidden",
    "dropout",
    "gamma",
    "k_noedge",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "batch_size",
    "max_steps",
    "eval_interval",
    "grad_clip",
];

impl RunConfig {
    pub fn from_kv(kv: &KvFile) -> Result<RunConfig, String> {
        for e in &kv.entries {
            if !RUN_KEYS.contains(&e.key.as_str()) {
                return Err(format!("line {}: unknown key {}", e.line, e.key));
            }
        }
        let seed: u64 = kv.parsed("seed")?.ok_or("seed is required")?;
        let node_mode: NodeMode = kv.parsed("node_mode")?.unwrap_or(NodeMode::Text);
        let edge_mode: EdgeMode = kv.parsed("edge_mode")?.unwrap_or(EdgeMode::Classify);
        let mut m = ModelConfig::new(node_mode, edge_mode);
        macro_rules! set {
            ($target:expr, $key:literal) => {
                if let Some(v) = kv.parsed($key)? {
                    $target = v;
                }
            };
        }
        set!(m.imbalance, "imbalance");
        set!(m.d_model, "d_model");
        set!(m.layers, "layers");
        set!(m.heads, "heads");
        set!(m.d_ff, "d_ff");
        set!(m.max_nodes, "max_nodes");
        set!(m.node_tokens, "node_tokens");
        set!(m.edge_tokens, "edge_tokens");
        set!(m.max_input, "max_input");
        set!(m.edge_hidden, "edge_hidden");
        set!(m.dropout, "dropout");
        set!(m.gamma, "gamma");
        set!(m.k_noedge, "k_noedge");
        let mut t = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        set!(t.optimizer.lr, "lr");
        set!(t.optimizer.beta1, "beta1");
        set!(t.optimizer.beta2, "beta2");
        set!(t.optimizer.eps, "eps");
        set!(t.optimizer.weight_decay, "weight_decay");
        set!(t.batch_size, "batch_size");
        set!(t.max_steps, "max_steps");
        set!(t.eval_interval, "eval_interval");
        if let Some(c) = kv.parsed::<f64>("grad_clip")? {
            t.grad_clip = (c > 0.0).then_some(c);
        }
        Ok(RunConfig { model: m, train: t })
    }

    pub fn parse(src: &str) -> Result<RunConfig, String> {
        RunConfig::from_kv(&KvFile::parse(src)?)
    }

    /// Every key in [`RUN_KEYS`] order; floats use the shortest
    /// representation that parses back to the same bits.
    pub fn to_kv(&self) -> KvFile {
        let (m, t) = (&self.model, &self.train);
        let mut kv = KvFile::default();
        let values = [
            t.seed.to_string(),
            m.node_mode.to_string(),
            m.edge_mode.to_string(),
            m.imbalance.to_string(),
            m.d_model.to_string(),
            m.layers.to_string(),
            m.heads.to_string(),
            m.d_ff.to_string(),
            m.max_nodes.to_string(),
            m.node_tokens.to_string(),
            m.edge_tokens.to_string(),
            m.max_input.to_string(),
            m.edge_hidden.to_string(),
            m.dropout.to_string(),
            m.gamma.to_string(),
            m.k_noedge.to_string(),
            t.optimizer.lr.to_string(),
            t.optimizer.beta1.to_string(),
            t.optimizer.beta2.to_string(),
            t.optimizer.eps.to_string(),
            t.optimizer.weight_decay.to_string(),
            t.batch_size.to_string(),
            t.max_steps.to_string(),
            t.eval_interval.to_string(),
            t.grad_clip.unwrap_or(0.0).to_string(),
        ];
        for (k, v) in RUN_KEYS.iter().zip(values) {
            kv.set(k, &v);
        }
        kv
    }
}

/// Corpus spec keys:
///
/// ```text
/// train = 200            dev = 40      test = 40
/// min_edges = 1          max_edges = 5 max_nodes = 8   reuse_prob = 0.7
/// relation.born_in = person -> city
/// template.born_in = {s} was born in {o}. | {s} is a native of {o}.
/// pool.person = Ada Lovelace | Alan Turing
/// ```
///
/// Relations keep their file order; `seed` may also be given.
pub fn parse_corpus_spec(kv: &KvFile) -> Result<(CorpusSpec, Option<u64>), String> {
    let mut spec = CorpusSpec {
        relations: Vec::new(),
        pools: BTreeMap::new(),
        train: 200,
        dev: 40,
        test: 40,
        min_edges: 1,
        max_edges: 5,
        max_nodes: 8,
        reuse_prob: 0.7,
    };
    let mut templates: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let split = |v: &str| -> Vec<String> { v.split('|').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect() };
    let mut seed = None;
    for e in &kv.entries {
        let at = |msg: String| format!("line {}: {msg}", e.line);
        let num = |v: &str| v.parse::<usize>().map_err(|err| at(format!("{} = {v:?}: {err}", e.key)));
        if let Some(name) = e.key.strip_prefix("relation.") {
            let (s, o) = e
                .value
                .split_once("->")
                .ok_or_else(|| at(format!("relation {name} needs `subject_type -> object_type`")))?;
            spec.relations.push(Relation {
                name: name.to_string(),
                subject_type: s.trim().to_string(),
                object_type: o.trim().to_string(),
                templates: Vec::new(),
            });
        } else if let Some(name) = e.key.strip_prefix("template.") {
            templates.insert(name.to_string(), split(&e.value));
        } else if let Some(ty) = e.key.strip_prefix("pool.") {
            spec.pools.insert(ty.to_string(), split(&e.value));
        } else {
            match e.key.as_str() {
                "train" => spec.train = num(&e.value)?,
                "dev" => spec.dev = num(&e.value)?,
                "test" => spec.test = num(&e.value)?,
                "min_edges" => spec.min_edges = num(&e.value)?,
                "max_edges" => spec.max_edges = num(&e.value)?,
                "max_nodes" => spec.max_nodes = num(&e.value)?,
                "reuse_prob" => {
                    spec.reuse_prob = e.value.parse().map_err(|err| at(format!("reuse_prob: {err}")))?;
                }
                "seed" => seed = Some(e.value.parse().map_err(|err| at(format!("seed: {err}")))?),
                other => return Err(at(format!("unknown key {other}"))),
            }
        }
    }
    for r in &mut spec.relations {
        r.templates = templates
            .remove(&r.name)
            .ok_or_else(|| format!("relation {} has no template line", r.name))?;
    }
    if let Some(name) = templates.keys().next() {
        return Err(format!("template.{name} has no matching relation"));
    }
    Ok((spec, seed))
}

/// Renders a spec in the format read by [`parse_corpus_spec`].
pub fn render_corpus_spec(spec: &CorpusSpec, seed: Option<u64>) -> String {
    let mut kv = KvFile::default();
    if let Some(s) = seed {
        kv.set("seed", &s.to_string());
    }
    for (k, v) in [
        ("train", spec.train.to_string()),
        ("dev", spec.dev.to_string()),
        ("test", spec.test.to_string()),
        ("min_edges", spec.min_edges.to_string()),
        ("max_edges", spec.max_edges.to_string()),
        ("max_nodes", spec.max_nodes.to_string()),
        ("reuse_prob", spec.reuse_prob.to_string()),
    ] {
        kv.set(k, &v);
    }
    for r in &spec.relations {
        kv.set(&format!("relation.{}", r.name), &format!("{} -> {}", r.subject_type, r.object_type));
        kv.set(&format!("template.{}", r.name), &r.templates.join(" | "));
    }
    for (ty, pool) in &spec.pools {
        kv.set(&format!("pool.{ty}"), &pool.join(" | "));
    }
    kv.render()
}
