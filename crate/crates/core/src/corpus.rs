//! Template-based synthetic corpus: random small graphs over typed entity
//! pools, verbalized one sentence per triple.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple, TripleSet};

pub const MIN_RELATIONS: usize = 10;
pub const MAX_RELATIONS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    pub subject_type: String,
    pub object_type: String,
    /// Sentences with `{s}` and `{o}` placeholders.
    pub templates: Vec<String>,
}

impl Relation {
    pub fn new(name: &str, subject_type: &str, object_type: &str, templates: &[&str]) -> Self {
        Relation {
            name: name.into(),
            subject_type: subject_type.into(),
            object_type: object_type.into(),
            templates: templates.iter().map(|t| t.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub relations: Vec<Relation>,
    /// Entity strings by type name.
    pub pools: BTreeMap<String, Vec<String>>,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub min_edges: usize,
    pub max_edges: usize,
    pub max_nodes: usize,
    /// Probability that a new triple attaches to an entity already in the graph.
    pub reuse_prob: f64,
}

/// Node and edge limits of the model the corpus is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacity {
    pub max_nodes: usize,
    pub max_edges: usize,
}

impl Default for Capacity {
    fn default() -> Self {
        Capacity { max_nodes: 8, max_edges: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub text: String,
    pub graph: KnowledgeGraph,
}

impl Example {
    pub fn triples(&self) -> TripleSet {
        self.graph.to_triples()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

impl CorpusSpec {
    /// The built-in twelve-relation corpus.
    pub fn demo() -> CorpusSpec {
        let relations = alloc::vec![
            Relation::new("born_in", "person", "city", &["{s} was born in {o}.", "{s} is a native of {o}."]),
            Relation::new("lives_in", "person", "city", &["{s} lives in {o}.", "{s} resides in {o}."]),
            Relation::new("works_for", "person", "company", &["{s} works for {o}.", "{s} is employed by {o}."]),
            Relation::new("founded", "person", "company", &["{s} founded {o}.", "{o} was founded by {s}."]),
            Relation::new("knows", "person", "person", &["{s} knows {o}.", "{s} is acquainted with {o}."]),
            Relation::new("mentor_of", "person", "person", &["{s} mentored {o}.", "{o} was trained by {s}."]),
            Relation::new("studies", "person", "field", &["{s} studies {o}.", "{s} does research in {o}."]),
            Relation::new("plays", "person", "instrument", &["{s} plays the {o}.", "{s} is a {o} player."]),
            Relation::new("located_in", "city", "country", &["{s} is located in {o}.", "{s} is a city in {o}."]),
            Relation::new(
                "headquartered_in",
                "company",
                "city",
                &["{s} is headquartered in {o}.", "{o} hosts the headquarters of {s}."]
            ),
            Relation::new("capital_of", "city", "country", &["{s} is the capital of {o}."]),
            Relation::new("active_in", "company", "field", &["{s} is active in {o}.", "{s} operates in {o}."]),
        ];
        let pool = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let mut pools = BTreeMap::new();
        pools.insert(
            "person".into(),
            pool(&[
                "Ada Lovelace",
                "Alan Turing",
                "Grace Hopper",
                "Emmy Noether",
                "Niels Bohr",
                "Marie Curie",
                "Carl Gauss",
                "Sofia Kovalevskaya",
                "John Nash",
                "Lise Meitner",
                "Paul Dirac",
                "Hedy Lamarr",
                "Kurt Godel",
                "Rosalind Franklin",
                "Srinivasa Ramanujan",
                "Barbara Liskov",
            ]),
        );
        pools.insert(
            "city".into(),
            pool(&["London", "Paris", "Berlin", "Madrid", "Rome", "Vienna", "Lisbon", "Oslo", "Prague", "Dublin"]),
        );
        pools.insert(
            "country".into(),
            pool(&["England", "France", "Germany", "Spain", "Italy", "Austria", "Portugal", "Norway"]),
        );
        pools.insert(
            "company".into(),
            pool(&["Acme Corp", "Globex", "Initech", "Umbrella Labs", "Stark Industries", "Wayne Enterprises", "Hooli", "Vandelay Industries"]),
        );
        pools.insert(
            "field".into(),
            pool(&["mathematics", "physics", "chemistry", "computer science", "biology", "astronomy"]),
        );
        pools.insert("instrument".into(), pool(&["violin", "piano", "cello", "flute", "guitar"]));
        CorpusSpec {
            relations,
            pools,
            train: 200,
            dev: 40,
            test: 40,
            min_edges: 1,
            max_edges: 4,
            max_nodes: 6,
            reuse_prob: 0.7,
        }
    }

    pub fn validate(&self, cap: Capacity) -> Result<()> {
        let n = self.relations.len();
        if !(MIN_RELATIONS..=MAX_RELATIONS).contains(&n) {
            return Err(Error::config(format!(
                "corpus needs {MIN_RELATIONS} to {MAX_RELATIONS} relations, got {n}"
            )));
        }
        if self.max_nodes > cap.max_nodes {
            return Err(Error::Capacity {
                what: "corpus max_nodes",
                got: self.max_nodes,
                max: cap.max_nodes,
            });
        }
        if self.max_edges > cap.max_edges {
            return Err(Error::Capacity {
                what: "corpus max_edges",
                got: self.max_edges,
                max: cap.max_edges,
            });
        }
        if self.min_edges == 0 || self.min_edges > self.max_edges {
            return Err(Error::config(format!(
                "edge range {}..={} is empty or includes 0",
                self.min_edges, self.max_edges
            )));
        }
        if self.max_nodes < 2 {
            return Err(Error::config("max_nodes must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.reuse_prob) {
            return Err(Error::config(format!("reuse_prob {} outside [0, 1]", self.reuse_prob)));
        }
        let mut names = BTreeSet::new();
        for r in &self.relations {
            if !names.insert(r.name.as_str()) {
                return Err(Error::config(format!("relation {} defined twice", r.name)));
            }
            if r.templates.is_empty() {
                return Err(Error::config(format!("relation {} has no templates", r.name)));
            }
            for t in &r.templates {
                if !t.contains("{s}") || !t.contains("{o}") {
                    return Err(Error::config(format!("template {t:?} needs both {{s}} and {{o}}")));
                }
            }
            for ty in [&r.subject_type, &r.object_type] {
                match self.pools.get(ty) {
                    Some(p) if !p.is_empty() => {}
                    _ => return Err(Error::config(format!("relation {} uses empty or unknown type {ty}", r.name))),
                }
            }
            if r.subject_type == r.object_type && self.pools[&r.subject_type].len() < 2 {
                return Err(Error::config(format!("relation {} needs two distinct {} entities", r.name, r.subject_type)));
            }
        }
        Ok(())
    }
}

pub fn fill_template(template: &str, subject: &str, object: &str) -> String {
    template.replace("{s}", subject).replace("{o}", object)
}

/// Generates train/dev/test splits for the default capacity (8 nodes, 7 edges).
pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> Result<Corpus> {
    generate_corpus_with_capacity(spec, seed, Capacity::default())
}

/// As [`generate_corpus`] for a model with different slot limits. Examples
/// with the same node set are never repeated, so the splits share no entity
/// combination.
pub fn generate_corpus_with_capacity(spec: &CorpusSpec, seed: u64, cap: Capacity) -> Result<Corpus> {
    spec.validate(cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = spec.train + spec.dev + spec.test;
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut examples = Vec::with_capacity(total);
    let budget = 1000 + 200 * total;
    let mut tries = 0;
    while examples.len() < total {
        tries += 1;
        if tries > budget {
            return Err(Error::config(format!(
                "could only generate {} distinct examples out of {total}; enlarge the entity pools",
                examples.len()
            )));
        }
        let Some(ex) = sample_example(spec, &mut rng) else { continue };
        let mut key = ex.graph.nodes().to_vec();
        key.sort();
        if seen.insert(key) {
            examples.push(ex);
        }
    }
    let test = examples.split_off(spec.train + spec.dev);
    let dev = examples.split_off(spec.train);
    Ok(Corpus {
        train: examples,
        dev,
        test,
    })
}

fn sample_example(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Option<Example> {
    let want = rng.gen_range(spec.min_edges..=spec.max_edges);
    let mut nodes: Vec<(String, String)> = Vec::new(); // (entity, type)
    let mut triples: Vec<(Triple, usize)> = Vec::new(); // (triple, relation index)
    let mut pairs = BTreeSet::new();
    let mut attempts = 0;
    while triples.len() < want && attempts < 20 * want {
        attempts += 1;
        let ri = rng.gen_range(0..spec.relations.len());
        let rel = &spec.relations[ri];
        let pick_fresh = |ty: &str, nodes: &[(String, String)], rng: &mut ChaCha8Rng| -> Option<String> {
            let fresh: Vec<&String> = spec.pools[ty].iter().filter(|e| !nodes.iter().any(|(n, _)| n == *e)).collect();
            fresh.choose(rng).map(|s| (*s).clone())
        };
        let pick_existing = |ty: &str, nodes: &[(String, String)], rng: &mut ChaCha8Rng| -> Option<String> {
            let have: Vec<&String> = nodes.iter().filter(|(_, t)| t == ty).map(|(n, _)| n).collect();
            have.choose(rng).map(|s| (*s).clone())
        };
        let reuse = !nodes.is_empty() && rng.gen_bool(spec.reuse_prob);
        let (s, o) = if reuse {
            // attach on one side, chosen at random among the sides that can attach
            let subject_first = rng.gen_bool(0.5);
            let sides = if subject_first { [true, false] } else { [false, true] };
            let mut found = None;
            for subject_side in sides {
                let (ty, other) = if subject_side {
                    (&rel.subject_type, &rel.object_type)
                } else {
                    (&rel.object_type, &rel.subject_type)
                };
                if let Some(anchor) = pick_existing(ty, &nodes, rng) {
                    let partner = if rng.gen_bool(0.3) {
                        pick_existing(other, &nodes, rng).or_else(|| pick_fresh(other, &nodes, rng))
                    } else {
                        pick_fresh(other, &nodes, rng)
                    };
                    if let Some(partner) = partner {
                        found = Some(if subject_side { (anchor, partner) } else { (partner, anchor) });
                        break;
                    }
                }
            }
            match found {
                Some(x) => x,
                None => continue,
            }
        } else {
            let Some(s) = pick_fresh(&rel.subject_type, &nodes, rng) else { continue };
            let mut with_s = nodes.clone();
            with_s.push((s.clone(), rel.subject_type.clone()));
            let Some(o) = pick_fresh(&rel.object_type, &with_s, rng) else { continue };
            (s, o)
        };
        if s == o || pairs.contains(&(s.clone(), o.clone())) {
            continue;
        }
        let new_nodes = [&s, &o].iter().filter(|x| !nodes.iter().any(|(n, _)| n == **x)).count();
        if nodes.len() + new_nodes > spec.max_nodes {
            continue;
        }
        for (x, ty) in [(&s, &rel.subject_type), (&o, &rel.object_type)] {
            if !nodes.iter().any(|(n, _)| n == x) {
                nodes.push((x.clone(), ty.clone()));
            }
        }
        pairs.insert((s.clone(), o.clone()));
        triples.push((Triple::new(s, rel.name.clone(), o), ri));
    }
    if triples.len() < want {
        return None;
    }
    triples.shuffle(rng);
    let mut sentences = Vec::with_capacity(triples.len());
    for (t, ri) in &triples {
        let tpl = spec.relations[*ri].templates.choose(rng).expect("validated non-empty");
        sentences.push(fill_template(tpl, &t.subject, &t.object));
    }
    let set = TripleSet::new(triples.into_iter().map(|(t, _)| t).collect());
    let graph = KnowledgeGraph::from_triples(&set).ok()?;
    Some(Example {
        text: sentences.join(" "),
        graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_template() {
        assert_eq!(fill_template("{s} was born in {o}.", "Ada", "London"), "Ada was born in London.");
    }

    #[test]
    fn demo_spec_is_valid() {
        CorpusSpec::demo().validate(Capacity::default()).unwrap();
    }

    #[test]
    fn relation_count_is_checked() {
        let mut spec = CorpusSpec::demo();
        spec.relations.truncate(9);
        assert!(matches!(spec.validate(Capacity::default()), Err(Error::Config(_))));
    }

    #[test]
    fn oversized_graphs_rejected() {
        let mut spec = CorpusSpec::demo();
        spec.max_nodes = 9;
        assert!(matches!(generate_corpus(&spec, 1), Err(Error::Capacity { .. })));
        let mut spec = CorpusSpec::demo();
        spec.max_edges = 8;
        assert!(matches!(generate_corpus(&spec, 1), Err(Error::Capacity { .. })));
    }
}
