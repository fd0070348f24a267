//! End-to-end gradient checks of the full training loss (node loss plus
//! edge loss) for every node-mode / edge-head pair, 20 seeds each.

use grapher_core::corpus::{generate_corpus, CorpusSpec};
use grapher_core::tensor::{grad_check_params, GradCheck, ParamId};
use grapher_core::{EdgeMode, GrapherModel, Imbalance, ModelConfig, NodeMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config(node: NodeMode, edge: EdgeMode, imbalance: Imbalance) -> ModelConfig {
    let mut cfg = ModelConfig::new(node, edge);
    cfg.imbalance = imbalance;
    cfg.d_model = 8;
    cfg.d_ff = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.edge_hidden = 8;
    cfg
}

fn check(node: NodeMode, edge: EdgeMode, imbalance: Imbalance) {
    let corpus = generate_corpus(&CorpusSpec::demo(), 3).unwrap();
    for seed in 0..20u64 {
        let mut model = GrapherModel::for_examples(tiny_config(node, edge, imbalance), &corpus.train, seed).unwrap();
        let ex = model.prepare(&corpus.train[seed as usize]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Biases start at exactly 0, so a pair whose first hidden layer is
        // fully inactive sits on a ReLU kink in the next layer. Jitter every
        // parameter so the check runs at a differentiable point.
        let ids: Vec<ParamId> = model.params.ids().collect();
        for id in ids {
            for x in model.params.get_mut(id).data_mut() {
                *x += rng.gen_range(-0.05..0.05);
            }
        }
        // one random coordinate of every parameter, plus extra random ones
        let mut coords: Vec<(ParamId, usize)> = model.params.iter().map(|(id, p)| (id, rng.gen_range(0..p.value.len()))).collect();
        for _ in 0..20 {
            let id = ParamId(rng.gen_range(0..model.params.len()));
            coords.push((id, rng.gen_range(0..model.params.get(id).len())));
        }
        let net = model.net.clone();
        let report = grad_check_params(
            &mut model.params,
            &coords,
            |t| Ok(net.example_loss(t, &ex, None)?.0),
            // The loss is O(10), so one ulp of it over 2·1e-6 is already
            // ~1e-9, the absolute tolerance at the floor; a wider step keeps
            // rounding noise well below it.
            GradCheck { eps: 1e-5, ..GradCheck::default() },
        )
        .unwrap();
        assert!(
            report.passed(),
            "{node}/{edge}/{imbalance} seed {seed}, {}: {report:?}",
            model.params.name(ParamId(report.worst.0))
        );
    }
}

#[test]
fn text_nodes_classify_focal() {
    check(NodeMode::Text, EdgeMode::Classify, Imbalance::Focal);
}

#[test]
fn text_nodes_generate_edges() {
    check(NodeMode::Text, EdgeMode::Generate, Imbalance::None);
}

#[test]
fn text_nodes_generate_sequence_focal() {
    check(NodeMode::Text, EdgeMode::Generate, Imbalance::Focal);
}

#[test]
fn query_nodes_classify_focal() {
    check(NodeMode::Query, EdgeMode::Classify, Imbalance::Focal);
}

#[test]
fn query_nodes_generate_edges() {
    check(NodeMode::Query, EdgeMode::Generate, Imbalance::None);
}
