use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tspgnn::generate::{generate, make_dual_pair, make_record, GeneratorTag, GroundTruth};
use tspgnn::oracles::{
    brute_force_optimal, calibrate_sa, held_karp, mean_relative_excess, nearest_neighbor, simulated_annealing,
    tour_cost, SaParams,
};
use tspgnn::TspInstance;

fn tag_strategy() -> impl Strategy<Value = GeneratorTag> {
    prop_oneof![
        Just(GeneratorTag::Euclidean),
        Just(GeneratorTag::RandomMetric),
        Just(GeneratorTag::Random),
    ]
}

#[test]
fn held_karp_equals_brute_force_on_fifty_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..50u64 {
        let n = 5 + (i % 5) as usize;
        let tag = GeneratorTag::ALL[(i % 3) as usize];
        let inst = generate(tag, n, rand::Rng::gen(&mut rng)).unwrap();
        let hk = held_karp(&inst).unwrap();
        let bf = brute_force_optimal(&inst).unwrap();
        assert!((hk.cost - bf.cost).abs() <= 1e-9, "instance {i}: {} vs {}", hk.cost, bf.cost);
        assert!((tour_cost(&inst, &hk.order).unwrap() - hk.cost).abs() <= 1e-12);
    }
}

#[test]
fn held_karp_equals_brute_force_at_ten_cities() {
    let inst = generate(GeneratorTag::Euclidean, 10, 42).unwrap();
    let hk = held_karp(&inst).unwrap();
    let bf = brute_force_optimal(&inst).unwrap();
    assert!((hk.cost - bf.cost).abs() <= 1e-9);
}

#[test]
fn held_karp_at_seventeen_beats_random_tours() {
    let inst = generate(GeneratorTag::Euclidean, 17, 2024).unwrap();
    let hk = held_karp(&inst).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut order: Vec<usize> = (0..17).collect();
    for _ in 0..1000 {
        order.shuffle(&mut rng);
        assert!(hk.cost <= tour_cost(&inst, &order).unwrap() + 1e-12);
    }
}

#[test]
fn calibrated_annealing_is_good_on_small_graphs() {
    let calibration: Vec<TspInstance> = (0..20)
        .map(|i| (*make_record(GeneratorTag::Euclidean, 10 + i % 6, 500 + i as u64, GroundTruth::ExactOnly).unwrap().instance).clone())
        .collect();
    let params = calibrate_sa(&calibration, 8, 3).unwrap();
    let test: Vec<TspInstance> = (0..100)
        .map(|i| (*make_record(GeneratorTag::Euclidean, 10 + i % 6, 9000 + i as u64, GroundTruth::ExactOnly).unwrap().instance).clone())
        .collect();
    let sa = mean_relative_excess(&test, |g| simulated_annealing(g, &params)).unwrap();
    let nn = mean_relative_excess(&test, |g| nearest_neighbor(g, 0)).unwrap();
    assert!(sa < 0.10, "annealing excess {sa}");
    assert!(nn > 0.0 && nn < 0.40, "nearest-neighbor excess {nn}");
}

/// Repeated-seed calibration experiment: the calibrated schedule never
/// loses to the default one on its calibration set. Strict improvement
/// is reported but not required, since the default schedule already finds
/// the optimum of most graphs this small.
#[test]
fn calibration_versus_default_over_seeds() {
    let mut strictly_better = 0;
    let seeds = 10;
    for seed in 0..seeds {
        let instances: Vec<TspInstance> = (0..30)
            .map(|i| {
                let s = 70_000 + 100 * seed + i;
                (*make_record(GeneratorTag::Euclidean, 10 + (i % 5) as usize, s, GroundTruth::ExactOnly).unwrap().instance).clone()
            })
            .collect();
        let tuned = calibrate_sa(&instances, 10, seed).unwrap();
        let default = SaParams {
            seed: tuned.seed,
            ..SaParams::default()
        };
        let a = mean_relative_excess(&instances, |g| simulated_annealing(g, &tuned)).unwrap();
        let b = mean_relative_excess(&instances, |g| simulated_annealing(g, &default)).unwrap();
        assert!(a <= b, "seed {seed}: calibrated {a} worse than default {b}");
        if a < b {
            strictly_better += 1;
        }
    }
    println!("calibration strictly better than default in {strictly_better}/{seeds} seeds");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn exact_solvers_agree_and_bound_heuristics(tag in tag_strategy(), n in 4usize..=8, seed in any::<u64>()) {
        let inst = generate(tag, n, seed).unwrap();
        let hk = held_karp(&inst).unwrap();
        let bf = brute_force_optimal(&inst).unwrap();
        prop_assert!((hk.cost - bf.cost).abs() <= 1e-9);
        let nn = nearest_neighbor(&inst, (seed % n as u64) as usize).unwrap();
        let sa = simulated_annealing(&inst, &SaParams { seed, ..SaParams::default() }).unwrap();
        prop_assert!(nn.cost >= hk.cost - 1e-12);
        prop_assert!(sa.cost >= hk.cost - 1e-12);
        let nn0 = nearest_neighbor(&inst, 0).unwrap();
        prop_assert!(sa.cost <= nn0.cost + 1e-12);
    }

    #[test]
    fn tour_cost_is_invariant_under_rotation_and_reflection(n in 3usize..=12, seed in any::<u64>(), shift in 0usize..12) {
        let inst = generate(GeneratorTag::Random, n, seed).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let base = tour_cost(&inst, &order).unwrap();
        let mut rotated = order.clone();
        rotated.rotate_left(shift % n);
        let mut reflected = order.clone();
        reflected.reverse();
        prop_assert!((tour_cost(&inst, &rotated).unwrap() - base).abs() < 1e-12);
        prop_assert!((tour_cost(&inst, &reflected).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn generated_weights_are_well_formed(tag in tag_strategy(), n in 3usize..=20, seed in any::<u64>()) {
        let inst = generate(tag, n, seed).unwrap();
        prop_assert_eq!(&inst, &generate(tag, n, seed).unwrap());
        for i in 0..n {
            prop_assert_eq!(inst.weight(i, i), 0.0);
            for j in 0..n {
                let w = inst.weight(i, j);
                prop_assert_eq!(w, inst.weight(j, i));
                prop_assert!((0.0..=1.0).contains(&w));
                if tag != GeneratorTag::Random {
                    for k in 0..n {
                        prop_assert!(inst.weight(i, k) <= w + inst.weight(j, k) + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn dual_pair_labels_are_correct(tag in tag_strategy(), n in 4usize..=9, seed in any::<u64>(), x in 0.001f64..0.999) {
        let record = make_record(tag, n, seed, GroundTruth::ExactOnly).unwrap();
        let pair = make_dual_pair(&record, x).unwrap();
        let best = brute_force_optimal(&record.instance).unwrap().cost;
        // YES: some tour is cheaper than the target; NO: none is.
        prop_assert!(best < pair.positive.target_cost);
        prop_assert!(best >= pair.negative.target_cost);
        prop_assert!(std::sync::Arc::ptr_eq(&pair.positive.graph, &pair.negative.graph));
    }
}
