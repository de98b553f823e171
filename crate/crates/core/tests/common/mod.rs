#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tspgnn::autodiff::{ParamStore, Tape, Var};
use tspgnn::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1)`, kept at least `gap` away from zero so
/// rectifier kinks stay out of finite-difference reach.
pub fn random_tensor(shape: &[usize], gap: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let v: f64 = rng.gen_range(gap..1.0);
            if rng.gen::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Tape gradients and central differences of every parameter entry.
pub fn gradients(
    store: &ParamStore<f64>,
    build: impl Fn(&mut Tape<f64>, &ParamStore<f64>) -> Var,
    h: f64,
) -> Vec<(String, Vec<f64>, Vec<f64>)> {
    let mut analytic = store.clone();
    let mut tape = Tape::new();
    let loss = build(&mut tape, &analytic);
    tape.backward(loss, &mut analytic).unwrap();

    let eval = |s: &ParamStore<f64>| {
        let mut tape = Tape::new();
        let loss = build(&mut tape, s);
        tape.value(loss).data()[0]
    };

    let mut out = Vec::new();
    for name in store.names() {
        let len = store.value(name).unwrap().len();
        let mut numeric = Vec::with_capacity(len);
        for k in 0..len {
            let mut plus = store.clone();
            plus.value_mut(name).unwrap().data_mut()[k] += h;
            let mut minus = store.clone();
            minus.value_mut(name).unwrap().data_mut()[k] -= h;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * h));
        }
        let a = analytic.grad(name).unwrap().data().to_vec();
        out.push((name.to_string(), a, numeric));
    }
    out
}

/// Largest entrywise relative error `|a − n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(
    store: &ParamStore<f64>,
    build: impl Fn(&mut Tape<f64>, &ParamStore<f64>) -> Var,
    h: f64,
    floor: f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for (name, a, n) in gradients(store, build, h) {
        for (k, (&a, &n)) in a.iter().zip(&n).enumerate() {
            let err = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            if err > worst.0 {
                worst = (err, format!("{name}[{k}]: analytic {a:e}, numeric {n:e}"));
            }
        }
    }
    worst
}

/// Largest per-parameter relative error `‖a − n‖ / max(‖a‖, ‖n‖)`.
pub fn max_tensor_relative_error(
    store: &ParamStore<f64>,
    build: impl Fn(&mut Tape<f64>, &ParamStore<f64>) -> Var,
    h: f64,
) -> (f64, String) {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst = (0.0, String::new());
    for (name, a, n) in gradients(store, build, h) {
        let diff: Vec<f64> = a.iter().zip(&n).map(|(x, y)| x - y).collect();
        let scale = norm(&a).max(norm(&n));
        let err = if scale == 0.0 { 0.0 } else { norm(&diff) / scale };
        if err > worst.0 {
            worst = (err, format!("{name}: |a| {:e}, |a-n| {:e}", norm(&a), norm(&diff)));
        }
    }
    worst
}

/// `Σ out ⊙ weights` with fixed pseudo-random weights, turning any tensor
/// into a scalar with a generic upstream gradient.
pub fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let w = random_tensor(&shape, 0.1, &mut rng(seed));
    let w = tape.constant(w);
    let p = tape.mul(out, w).unwrap();
    tape.sum(p)
}
