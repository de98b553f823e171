//! Times one training step (forward and backward) on a 16-pair batch.
//!
//! `cargo run --release --example step_timing -- [t_max] [steps]`

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tspgnn::generate::{generate, GeneratorTag};
use tspgnn::model::{loss_and_gradients, ModelConfig, ModelParams};
use tspgnn::DecisionInstance;

fn main() {
    let t_max: usize = std::env::args().nth(1).map_or(32, |s| s.parse().expect("t_max"));
    let steps: usize = std::env::args().nth(2).map_or(6, |s| s.parse().expect("steps"));
    let mut batch = Vec::new();
    for i in 0..16u64 {
        let g = Arc::new(generate(GeneratorTag::Euclidean, 10 + (i as usize % 9), i).unwrap());
        batch.push(DecisionInstance::new(g.clone(), 3.0, Some(true)));
        batch.push(DecisionInstance::new(g, 2.5, Some(false)));
    }
    let config = ModelConfig {
        t_max,
        ..ModelConfig::default()
    };
    let mut params = ModelParams::<f64>::init(config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut best = f64::INFINITY;
    for _ in 0..steps {
        let start = Instant::now();
        params.store_mut().zero_grad();
        loss_and_gradients(&batch, &mut params).unwrap();
        let secs = start.elapsed().as_secs_f64();
        best = best.min(secs);
        println!("step {secs:.3}s");
    }
    println!("best {best:.3}s");
}
