//! Random instance distributions, ground-truth labeling and dual pairs.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{DecisionInstance, TspInstance};
use crate::oracles::{held_karp, simulated_annealing, SaParams, HELD_KARP_LIMIT};

/// Side of the square the euclidean points are drawn from; its diagonal is 1.
pub const SQUARE_SIDE: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorTag {
    Euclidean,
    RandomMetric,
    Random,
}

impl GeneratorTag {
    pub const ALL: [GeneratorTag; 3] = [
        GeneratorTag::Euclidean,
        GeneratorTag::RandomMetric,
        GeneratorTag::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorTag::Euclidean => "euclidean",
            GeneratorTag::RandomMetric => "random_metric",
            GeneratorTag::Random => "random",
        }
    }
}

impl fmt::Display for GeneratorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneratorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown generator `{s}`")))
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidInstance(format!("need at least 3 cities, got {n}")));
    }
    Ok(())
}

/// `n` points uniform on the square of side √2/2, weighted by distance.
pub fn gen_euclidean<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<TspInstance> {
    check_n(n)?;
    let coords = (0..n)
        .map(|_| [rng.gen_range(0.0..SQUARE_SIDE), rng.gen_range(0.0..SQUARE_SIDE)])
        .collect();
    TspInstance::from_coords(coords)
}

fn uniform_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            // (0, 1]
            let x = 1.0 - rng.gen::<f64>();
            w[i * n + j] = x;
            w[j * n + i] = x;
        }
    }
    w
}

/// Symmetric weights uniform in (0, 1] with no metric guarantee.
pub fn gen_random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<TspInstance> {
    check_n(n)?;
    TspInstance::from_weights(n, uniform_symmetric(n, rng))
}

/// Uniform weights replaced by their all-pairs shortest-path distances.
pub fn gen_random_metric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<TspInstance> {
    check_n(n)?;
    let mut w = uniform_symmetric(n, rng);
    metric_closure(n, &mut w);
    TspInstance::from_weights(n, w)
}

/// Floyd–Warshall in place on a row-major `n×n` matrix.
pub fn metric_closure(n: usize, w: &mut [f64]) {
    for k in 0..n {
        for i in 0..n {
            let wik = w[i * n + k];
            for j in 0..n {
                let via = wik + w[k * n + j];
                if via < w[i * n + j] {
                    w[i * n + j] = via;
                }
            }
        }
    }
}

/// Instance as a pure function of `(tag, n, seed)`.
pub fn generate(tag: GeneratorTag, n: usize, seed: u64) -> Result<TspInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match tag {
        GeneratorTag::Euclidean => gen_euclidean(n, &mut rng),
        GeneratorTag::RandomMetric => gen_random_metric(n, &mut rng),
        GeneratorTag::Random => gen_random(n, &mut rng),
    }
}

/// A generated graph with its ground-truth optimal tour cost.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub instance: Arc<TspInstance>,
    pub optimal_cost: f64,
    /// False when the cost came from a heuristic (beyond the exact limit).
    pub exact: bool,
    pub tag: GeneratorTag,
    pub seed: u64,
}

/// How ground truth is obtained for instances above the exact-solver limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruth {
    ExactOnly,
    AllowApproximate,
}

/// Annealing restarts used for approximate ground truth.
const APPROX_RESTARTS: u64 = 4;

/// Generates one record: exact optimum via Held-Karp, or (when allowed)
/// the best of several annealing runs flagged as approximate.
pub fn make_record(tag: GeneratorTag, n: usize, seed: u64, truth: GroundTruth) -> Result<DatasetRecord> {
    let instance = generate(tag, n, seed)?;
    let (cost, exact) = if n <= HELD_KARP_LIMIT {
        (held_karp(&instance)?.cost, true)
    } else if truth == GroundTruth::AllowApproximate {
        let mut best = f64::INFINITY;
        for r in 0..APPROX_RESTARTS {
            let p = SaParams {
                t0: 0.5,
                alpha: 0.98,
                t_min: 1e-4,
                moves_per_temperature: None,
                seed: seed.wrapping_add(r),
            };
            best = best.min(simulated_annealing(&instance, &p)?.cost);
        }
        (best, false)
    } else {
        return Err(Error::Capacity {
            solver: "Held-Karp",
            limit: HELD_KARP_LIMIT,
            n,
        });
    };
    Ok(DatasetRecord {
        instance: Arc::new(instance.with_optimal_cost(cost)),
        optimal_cost: cost,
        exact,
        tag,
        seed,
    })
}

/// Seed of the `index`-th record of a dataset (SplitMix64 finalizer).
pub fn record_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// City count for a record, uniform on `min_n..=max_n`, derived from its seed.
pub fn record_size(seed: u64, min_n: usize, max_n: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FF_EE00_D15E_A5E5);
    rng.gen_range(min_n..=max_n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub tag: GeneratorTag,
    pub min_n: usize,
    pub max_n: usize,
    pub count: usize,
    pub seed: u64,
    pub truth: GroundTruth,
}

/// Generates `count` records; record `i` depends only on `(tag, seed, i)`.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<DatasetRecord>> {
    if spec.min_n < 3 || spec.min_n > spec.max_n {
        return Err(Error::InvalidArgument(format!(
            "size range {}..={} is invalid",
            spec.min_n, spec.max_n
        )));
    }
    if spec.truth == GroundTruth::ExactOnly && spec.max_n > HELD_KARP_LIMIT {
        return Err(Error::Capacity {
            solver: "Held-Karp",
            limit: HELD_KARP_LIMIT,
            n: spec.max_n,
        });
    }
    (0..spec.count as u64)
        .map(|i| {
            let seed = record_seed(spec.seed, i);
            let n = record_size(seed, spec.min_n, spec.max_n);
            make_record(spec.tag, n, seed, spec.truth)
        })
        .collect()
}

/// YES instance at `(1 + x)·C*` and NO instance at `(1 − x)·C*`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPair {
    pub positive: DecisionInstance,
    pub negative: DecisionInstance,
    pub deviation: f64,
}

pub fn make_dual_pair(record: &DatasetRecord, x: f64) -> Result<DualPair> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidArgument(format!("deviation must lie in (0, 1), got {x}")));
    }
    let c = record.optimal_cost;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::MissingOptimum);
    }
    Ok(DualPair {
        positive: DecisionInstance::new(Arc::clone(&record.instance), (1.0 + x) * c, Some(true)),
        negative: DecisionInstance::new(Arc::clone(&record.instance), (1.0 - x) * c, Some(false)),
        deviation: x,
    })
}

/// Decision instance at signed deviation `x` (label YES iff `x > 0`).
pub fn decision_at(record: &DatasetRecord, x: f64) -> DecisionInstance {
    let label = if x > 0.0 {
        Some(true)
    } else if x < 0.0 {
        Some(false)
    } else {
        None
    };
    DecisionInstance::new(Arc::clone(&record.instance), (1.0 + x) * record.optimal_cost, label)
}
