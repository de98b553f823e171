mod common;

use std::sync::Arc;

use common::{max_relative_error, max_tensor_relative_error, random_tensor, rng, weighted_sum};
use tspgnn::autodiff::{EdgeEndpoints, LstmInput, ParamStore, Tape, Var};
use tspgnn::generate::{generate, make_dual_pair, DatasetRecord, GeneratorTag};
use tspgnn::model::{run_batch, GraphBatch, ModelConfig, ModelParams};
use tspgnn::nn::{LstmCell, Mlp};
use tspgnn::oracles::held_karp;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;
const FLOOR: f64 = 1e-7;

fn store(entries: &[(&str, &[usize])], seed: u64) -> ParamStore<f64> {
    let mut r = rng(seed);
    let mut s = ParamStore::new();
    for (name, shape) in entries {
        s.insert(*name, random_tensor(shape, 0.05, &mut r));
    }
    s
}

fn check(store: &ParamStore<f64>, tol: f64, build: impl Fn(&mut Tape<f64>, &ParamStore<f64>) -> Var) {
    let (err, at) = max_relative_error(store, build, H, FLOOR);
    assert!(err < tol, "relative error {err:e} at {at}");
}

fn p(tape: &mut Tape<f64>, s: &ParamStore<f64>, name: &str) -> Var {
    tape.param(s, name).unwrap()
}

#[test]
fn matmul_add_row_and_linear() {
    let s = store(&[("a", &[3, 4]), ("b", &[4, 5]), ("c", &[5])], 1);
    check(&s, TOL, |t, s| {
        let (a, b, c) = (p(t, s, "a"), p(t, s, "b"), p(t, s, "c"));
        let m = t.matmul(a, b).unwrap();
        let y = t.add_row(m, c).unwrap();
        weighted_sum(t, y, 9)
    });
    for relu in [false, true] {
        check(&s, TOL, |t, s| {
            let (a, b, c) = (p(t, s, "a"), p(t, s, "b"), p(t, s, "c"));
            let y = t.linear(a, b, c, relu).unwrap();
            weighted_sum(t, y, 9)
        });
    }
}

#[test]
fn elementwise_operations() {
    let s = store(&[("a", &[3, 4]), ("b", &[3, 4])], 2);
    check(&s, TOL, |t, s| {
        let (a, b) = (p(t, s, "a"), p(t, s, "b"));
        let x = t.add(a, b).unwrap();
        let y = t.mul(x, a).unwrap();
        let z = t.relu(y);
        let w = t.sigmoid(b);
        let out = t.add(z, w).unwrap();
        weighted_sum(t, out, 3)
    });
}

#[test]
fn reshaping_operations() {
    let s = store(&[("a", &[3, 4]), ("b", &[3, 2]), ("v", &[5])], 3);
    check(&s, TOL, |t, s| {
        let (a, b, v) = (p(t, s, "a"), p(t, s, "b"), p(t, s, "v"));
        let joined = t.concat_cols(a, b).unwrap();
        let mid = t.slice_cols(joined, 2, 3).unwrap();
        let top = t.slice_rows(joined, 1, 2).unwrap();
        let wide = t.broadcast_rows(v, 4);
        let s1 = weighted_sum(t, mid, 1);
        let s2 = weighted_sum(t, top, 2);
        let s3 = weighted_sum(t, wide, 3);
        let s12 = t.add(s1, s2).unwrap();
        t.add(s12, s3).unwrap()
    });
}

#[test]
fn layer_norm() {
    let s = store(&[("x", &[4, 6]), ("g", &[6]), ("b", &[6])], 4);
    check(&s, TOL, |t, s| {
        let (x, g, b) = (p(t, s, "x"), p(t, s, "g"), p(t, s, "b"));
        let y = t.layer_norm(x, g, b, 1e-5).unwrap();
        weighted_sum(t, y, 5)
    });
}

fn triangle_and_edge() -> Arc<EdgeEndpoints> {
    Arc::new(EdgeEndpoints {
        pairs: vec![(0, 1), (0, 2), (1, 2), (3, 4)],
        num_vertices: 5,
    })
}

#[test]
fn sparse_incidence_products_and_segments() {
    let ep = triangle_and_edge();
    let s = store(&[("e", &[4, 3]), ("v", &[5, 3]), ("l", &[7])], 5);
    check(&s, TOL, |t, s| {
        let (e, v, l) = (p(t, s, "e"), p(t, s, "v"), p(t, s, "l"));
        let to_v = t.scatter_to_vertices(e, &ep).unwrap();
        let to_e = t.gather_from_vertices(v, &ep).unwrap();
        let means = t.segment_mean(l, &[0, 3, 4, 7]).unwrap();
        let a = weighted_sum(t, to_v, 1);
        let b = weighted_sum(t, to_e, 2);
        let c = weighted_sum(t, means, 3);
        let ab = t.add(a, b).unwrap();
        t.add(ab, c).unwrap()
    });
}

#[test]
fn binary_cross_entropy() {
    let s = store(&[("z", &[6])], 6);
    check(&s, TOL, |t, s| {
        let z = p(t, s, "z");
        t.bce_with_logits(z, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap()
    });
}

#[test]
fn mlp_stack() {
    let mlp = Mlp::new("m", 3, &[5, 4, 2]);
    let mut s = ParamStore::new();
    mlp.init_params(&mut s, &mut rng(7));
    s.insert("x", random_tensor(&[4, 3], 0.05, &mut rng(8)));
    for name in ["m.0.bias", "m.1.bias", "m.2.bias"] {
        let len = s.value(name).unwrap().len();
        *s.value_mut(name).unwrap() = random_tensor(&[len], 0.05, &mut rng(len as u64));
    }
    check(&s, TOL, |t, s| {
        let x = p(t, s, "x");
        let y = mlp.forward(t, s, x).unwrap();
        weighted_sum(t, y, 10)
    });
}

fn lstm_store(cell: &LstmCell, rows: usize, seed: u64) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    cell.init_params(&mut s, &mut rng(seed));
    let mut r = rng(seed + 1);
    for name in s.names().map(str::to_string).collect::<Vec<_>>() {
        let shape = s.value(&name).unwrap().shape().to_vec();
        let jitter = random_tensor(&shape, 0.0, &mut r).map(|v| 0.3 * v);
        let v = s.value_mut(&name).unwrap();
        *v = Tensor::new(shape, v.data().iter().zip(jitter.data()).map(|(a, b)| a + b).collect()).unwrap();
    }
    s.insert("x", random_tensor(&[rows, cell.input], 0.05, &mut r));
    s.insert("h", random_tensor(&[rows, cell.hidden], 0.05, &mut r));
    s.insert("c", random_tensor(&[rows, cell.hidden], 0.05, &mut r));
    s
}

use tspgnn::tensor::Tensor;

fn lstm_loss(t: &mut Tape<f64>, hidden: Var, cell: Var) -> Var {
    let a = weighted_sum(t, hidden, 21);
    let b = weighted_sum(t, cell, 22);
    t.add(a, b).unwrap()
}

#[test]
fn fused_lstm_step() {
    let cell = LstmCell::new("u", 3, 4);
    let s = lstm_store(&cell, 5, 11);
    check(&s, TOL, |t, s| {
        let (x, h, c) = (p(t, s, "x"), p(t, s, "h"), p(t, s, "c"));
        let (h2, c2) = cell.step(t, s, x, h, c).unwrap();
        lstm_loss(t, h2, c2)
    });
}

#[test]
fn lstm_step_feeding_only_the_cell_state() {
    let cell = LstmCell::new("u", 3, 4);
    let s = lstm_store(&cell, 5, 12);
    check(&s, TOL, |t, s| {
        let (x, h, c) = (p(t, s, "x"), p(t, s, "h"), p(t, s, "c"));
        let (_, c2) = cell.step(t, s, x, h, c).unwrap();
        weighted_sum(t, c2, 3)
    });
}

#[test]
fn fused_lstm_matches_composed_reference() {
    let cell = LstmCell::new("u", 3, 4);
    let s = lstm_store(&cell, 5, 13);
    let run = |reference: bool| {
        let mut g = s.clone();
        let mut t = Tape::new();
        let (x, h, c) = (p(&mut t, &g, "x"), p(&mut t, &g, "h"), p(&mut t, &g, "c"));
        let (h2, c2) = if reference {
            cell.step_reference(&mut t, &g, x, h, c).unwrap()
        } else {
            cell.step(&mut t, &g, x, h, c).unwrap()
        };
        let values = (t.value(h2).clone(), t.value(c2).clone());
        let loss = lstm_loss(&mut t, h2, c2);
        t.backward(loss, &mut g).unwrap();
        (values, g)
    };
    let ((h_ref, c_ref), g_ref) = run(true);
    let ((h_fused, c_fused), g_fused) = run(false);
    assert!(h_ref.max_abs_diff(&h_fused) < 1e-12);
    assert!(c_ref.max_abs_diff(&c_fused) < 1e-12);
    for name in g_ref.names() {
        let diff = g_ref.grad(name).unwrap().max_abs_diff(g_fused.grad(name).unwrap());
        assert!(diff < 1e-12, "{name}: {diff}");
    }
}

#[test]
fn lstm_with_edge_summed_input() {
    let ep = triangle_and_edge();
    let cell = LstmCell::new("u", 3, 4);
    let mut s = lstm_store(&cell, 4, 14);
    s.insert("xv", random_tensor(&[5, 3], 0.05, &mut rng(15)));
    let fused = |t: &mut Tape<f64>, s: &ParamStore<f64>| {
        let (xv, h, c) = (p(t, s, "xv"), p(t, s, "h"), p(t, s, "c"));
        let k = cell.input_kernel(t, s).unwrap();
        let pv = t.matmul(xv, k).unwrap();
        let (h2, c2) = cell
            .step_projected(t, s, LstmInput::EdgeSums(pv, Arc::clone(&ep)), h, c)
            .unwrap();
        lstm_loss(t, h2, c2)
    };
    check(&s, TOL, fused);

    let direct = |t: &mut Tape<f64>, s: &ParamStore<f64>| {
        let (xv, h, c) = (p(t, s, "xv"), p(t, s, "h"), p(t, s, "c"));
        let xe = t.gather_from_vertices(xv, &ep).unwrap();
        let (h2, c2) = cell.step(t, s, xe, h, c).unwrap();
        lstm_loss(t, h2, c2)
    };
    let mut t1 = Tape::new();
    let mut t2 = Tape::new();
    let (a, b) = (fused(&mut t1, &s), direct(&mut t2, &s));
    assert!((t1.value(a).data()[0] - t2.value(b).data()[0]).abs() < 1e-12);
}

fn six_city_record() -> DatasetRecord {
    let inst = generate(GeneratorTag::Euclidean, 6, 2024).unwrap();
    let opt = held_karp(&inst).unwrap().cost;
    DatasetRecord {
        instance: Arc::new(inst.with_optimal_cost(opt)),
        optimal_cost: opt,
        exact: true,
        tag: GeneratorTag::Euclidean,
        seed: 2024,
    }
}

/// Whole network, n=6, d=8, four iterations, both members of a dual pair.
/// Compared per parameter tensor: single entries below ~1e-7 sit at the
/// round-off level of a central difference with h = 1e-5.
#[test]
fn full_model_gradient() {
    let config = ModelConfig::small(8, 4);
    let params = ModelParams::<f64>::init(config.clone(), &mut rng(31)).unwrap();
    let mut store = params.into_store();
    // Nonzero biases and shifts so every parameter carries gradient.
    let mut r = rng(32);
    for name in store.names().map(str::to_string).collect::<Vec<_>>() {
        if name.ends_with("bias") || name.ends_with("shift") {
            let len = store.value(&name).unwrap().len();
            let shape = store.value(&name).unwrap().shape().to_vec();
            let noise = random_tensor(&[len], 0.0, &mut r);
            let v = store.value_mut(&name).unwrap();
            *v = Tensor::new(shape, v.data().iter().zip(noise.data()).map(|(a, b)| a + 0.2 * b).collect()).unwrap();
        }
    }
    let pair = make_dual_pair(&six_city_record(), 0.1).unwrap();
    let batch = GraphBatch::<f64>::from_decisions(&[pair.positive, pair.negative]).unwrap();
    let (err, at) = max_tensor_relative_error(
        &store,
        |t, s| {
            let m = ModelParams::from_store(config.clone(), s.clone()).unwrap();
            let (_, means) = run_batch(t, &batch, &m).unwrap();
            t.bce_with_logits(means, &[1.0, 0.0]).unwrap()
        },
        H,
    );
    assert!(err < 1e-4, "relative error {err:e} at {at}");
}
