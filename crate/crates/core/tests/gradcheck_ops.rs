//! Every tape operator and layer against central differences, 20 seeds
//! each, rtol 1e-5 in f64. The loss is `sum(op(x) ⊙ W)` with a random
//! constant `W`, so every output coordinate contributes with its own weight.

use grapher_core::tensor::nn::{GruCell, LayerNorm, Linear, MultiHeadAttention};
use grapher_core::tensor::{grad_check, grad_check_params, GradCheck, ParamId, ParamStore, Tape, Tensor, Var};
use grapher_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// Values kept away from 0 so `relu` is never probed across its kink.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(0.1..1.5);
            if rng.gen_bool(0.5) {
                x
            } else {
                -x
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `sum(out ⊙ W)` for a random `W` drawn from `seed`.
fn weighted_sum(t: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let shape = t.shape(out).to_vec();
    let n = shape.iter().product();
    let w = t.constant(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let p = t.mul(out, w)?;
    Ok(t.sum(p))
}

fn check_op<I, F>(name: &str, inputs: I, f: F)
where
    I: Fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = inputs(&mut rng);
        let report = grad_check(
            |t, v| {
                let out = f(t, v)?;
                weighted_sum(t, out, seed)
            },
            &xs,
            GradCheck::default(),
        )
        .unwrap();
        assert!(report.passed(), "{name} seed {seed}: {report:?}");
    }
}

#[test]
fn binary_elementwise() {
    let two = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[3, 4]), rand_tensor(r, &[3, 4])];
    check_op("add", two, |t, v| t.add(v[0], v[1]));
    check_op("sub", two, |t, v| t.sub(v[0], v[1]));
    check_op("mul", two, |t, v| t.mul(v[0], v[1]));
    check_op("add_row", |r| vec![rand_tensor(r, &[3, 4]), rand_tensor(r, &[1, 4])], |t, v| t.add_row(v[0], v[1]));
}

#[test]
fn unary_elementwise() {
    let one = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[2, 5])];
    check_op("scale", one, |t, v| Ok(t.scale(v[0], -1.7)));
    check_op("neg", one, |t, v| Ok(t.neg(v[0])));
    check_op("add_const", one, |t, v| t.add_const(v[0], &[0.5; 10]));
    check_op("mul_const", one, |t, v| t.mul_const(v[0], (0..10).map(|k| k as f64 - 4.5).collect()));
    check_op("relu", |r| vec![away_from_zero(r, &[2, 5])], |t, v| Ok(t.relu(v[0])));
    check_op("tanh", one, |t, v| Ok(t.tanh(v[0])));
    check_op("sigmoid", one, |t, v| Ok(t.sigmoid(v[0])));
    check_op("one_minus", one, |t, v| Ok(t.one_minus(v[0])));
    check_op("exp", one, |t, v| Ok(t.exp(v[0])));
}

#[test]
fn products() {
    check_op("matmul", |r| vec![rand_tensor(r, &[3, 4]), rand_tensor(r, &[4, 2])], |t, v| t.matmul(v[0], v[1]));
    check_op("matmul_t", |r| vec![rand_tensor(r, &[3, 4]), rand_tensor(r, &[5, 4])], |t, v| t.matmul_t(v[0], v[1]));
}

#[test]
fn normalizers() {
    let one = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[3, 6])];
    check_op("softmax", one, |t, v| Ok(t.softmax(v[0])));
    check_op("log_softmax", one, |t, v| Ok(t.log_softmax(v[0])));
    check_op(
        "layer_norm",
        |r| vec![rand_tensor(r, &[3, 6]), rand_tensor(r, &[1, 6]), rand_tensor(r, &[1, 6])],
        |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5),
    );
}

#[test]
fn indexing_and_layout() {
    let m = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[4, 3])];
    check_op("embedding", m, |t, v| t.embedding(v[0], &[2, 0, 2, 3]));
    check_op("gather_rows", m, |t, v| t.gather_rows(v[0], &[3, 3, 1]));
    check_op("slice_cols", m, |t, v| t.slice_cols(v[0], 1, 2));
    check_op("slice_rows", m, |t, v| t.slice_rows(v[0], 1, 2));
    check_op("pool_rows", m, |t, v| t.pool_rows(v[0], vec![vec![0, 2], vec![], vec![1, 2, 3]]));
    check_op("mean_rows", m, |t, v| t.mean_rows(v[0]));
    check_op("sum", m, |t, v| Ok(t.sum(v[0])));
    check_op("mean", m, |t, v| t.mean(v[0]));
    check_op("pick", m, |t, v| t.pick(v[0], vec![11, 0, 5, 5]));
    check_op("segment_mean", m, |t, v| t.segment_mean(v[0], vec![0, 1, 1, 2, 0, 0, 1, 2, 2, 0, 1, 1], 3));
    check_op("reshape", m, |t, v| t.reshape(v[0], vec![2, 6]));
    let two = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[2, 3]), rand_tensor(r, &[2, 2])];
    check_op("concat_cols", two, |t, v| t.concat_cols(&[v[0], v[1], v[0]]));
    let rows = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[2, 3]), rand_tensor(r, &[1, 3])];
    check_op("concat_rows", rows, |t, v| t.concat_rows(&[v[1], v[0]]));
}

#[test]
fn focal_over_log_probabilities() {
    for gamma in [0.0, 0.5, 2.0, 3.0] {
        check_op(
            &format!("focal gamma={gamma}"),
            |r| vec![rand_tensor(r, &[3, 5])],
            |t, v| {
                let lp = t.log_softmax(v[0]);
                Ok(t.focal(lp, gamma))
            },
        );
    }
}

/// Checks every coordinate of every parameter in `store`.
fn check_params<F>(name: &str, seed: u64, store: &mut ParamStore, f: F)
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let coords: Vec<(ParamId, usize)> = store
        .iter()
        .flat_map(|(id, p)| (0..p.value.len()).map(move |k| (id, k)))
        .collect();
    let report = grad_check_params(
        store,
        &coords,
        |t| {
            let out = f(t)?;
            weighted_sum(t, out, seed)
        },
        GradCheck::default(),
    )
    .unwrap();
    assert!(report.passed(), "{name} seed {seed}: {report:?}");
}

#[test]
fn linear_and_layer_norm_layers() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let x = store.add("x", rand_tensor(&mut rng, &[3, 4]));
        let lin = Linear::new(&mut store, "lin", 4, 5, &mut rng);
        let ln = LayerNorm::new(&mut store, "ln", 5);
        check_params("linear+layer_norm", seed, &mut store, |t| {
            let x = t.param(x);
            let y = lin.forward(t, x)?;
            ln.forward(t, y)
        });
    }
}

#[test]
fn attention_layer() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let q = store.add("q", rand_tensor(&mut rng, &[3, 4]));
        let k = store.add("k", rand_tensor(&mut rng, &[5, 4]));
        let mha = MultiHeadAttention::new(&mut store, "att", 4, 2, &mut rng);
        let mask: Vec<f64> = (0..15).map(|i| if i % 7 == 3 { -1e9 } else { 0.0 }).collect();
        check_params("attention", seed, &mut store, |t| {
            let (q, k) = (t.param(q), t.param(k));
            Ok(mha.forward(t, q, k, Some(&mask))?.out)
        });
    }
}

#[test]
fn gru_cell_unrolled() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let xs = store.add("xs", rand_tensor(&mut rng, &[3, 2, 4]));
        let h0 = store.add("h0", rand_tensor(&mut rng, &[2, 3]));
        let gru = GruCell::new(&mut store, "gru", 4, 3, &mut rng);
        check_params("gru", seed, &mut store, |t| {
            let all = t.param(xs);
            let all = t.reshape(all, vec![6, 4])?;
            let mut h = t.param(h0);
            let mut outs = Vec::new();
            for step in 0..3 {
                let x = t.slice_rows(all, 2 * step, 2)?;
                h = gru.forward(t, x, h)?;
                outs.push(h);
            }
            t.concat_rows(&outs)
        });
    }
}

/// Negative control: a "square" whose second factor is detached computes
/// the right value with half the true gradient. The checker must reject it.
#[test]
fn detached_factor_is_caught() {
    let mut rejected = 0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = vec![away_from_zero(&mut rng, &[2, 3])];
        let report = grad_check(
            |t, v| {
                let copy = t.constant(t.shape(v[0]).to_vec(), t.value(v[0]).to_vec())?;
                let sq = t.mul(v[0], copy)?;
                Ok(t.sum(sq))
            },
            &xs,
            GradCheck::default(),
        )
        .unwrap();
        if !report.passed() {
            rejected += 1;
        }
    }
    assert_eq!(rejected, SEEDS);
}
