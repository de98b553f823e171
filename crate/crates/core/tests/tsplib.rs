use std::fmt::Write;

use proptest::prelude::*;

use tspgnn::tsplib::{bundled, parse_tour, parse_tsplib, GeoMode};

#[test]
fn berlin52_published_tour_has_the_published_cost() {
    let b = bundled("berlin52").unwrap();
    let inst = parse_tsplib(b.problem, GeoMode::Haversine).unwrap();
    let tour = parse_tour(b.optimal_tour).unwrap();
    assert_eq!(inst.n(), 52);
    assert_eq!(inst.tour_cost(&tour).unwrap(), 7542.0);
}

#[test]
fn ulysses16_published_tour_under_both_conventions() {
    let b = bundled("ulysses16").unwrap();
    let tour = parse_tour(b.optimal_tour).unwrap();
    let strict = parse_tsplib(b.problem, GeoMode::Tsplib).unwrap();
    assert_eq!(strict.tour_cost(&tour).unwrap(), 6859.0);
    let sphere = parse_tsplib(b.problem, GeoMode::Haversine).unwrap();
    let cost = sphere.tour_cost(&tour).unwrap();
    assert!((cost - 6859.0).abs() / 6859.0 < 0.005, "haversine cost {cost}");
}

#[test]
fn published_tours_are_optimal_against_normalized_weights() {
    for b in tspgnn::tsplib::BUNDLED {
        let inst = parse_tsplib(b.problem, GeoMode::Tsplib).unwrap();
        let tour = parse_tour(b.optimal_tour).unwrap();
        let normalized = tspgnn::oracles::tour_cost(&inst.normalized, &tour).unwrap();
        assert!((inst.denormalize(normalized) - b.optimum).abs() < 1e-6 * b.optimum);
    }
}

fn euc_text(coords: &[(i32, i32)]) -> String {
    let mut s = format!("NAME: prop\nTYPE: TSP\nDIMENSION: {}\nEDGE_WEIGHT_TYPE: EUC_2D\nNODE_COORD_SECTION\n", coords.len());
    for (k, (x, y)) in coords.iter().enumerate() {
        let _ = writeln!(s, "{} {x} {y}", k + 1);
    }
    s.push_str("EOF\n");
    s
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn normalization_is_invertible(coords in prop::collection::vec((-5000i32..5000, -5000i32..5000), 3..25)) {
        prop_assume!(coords.iter().any(|c| *c != coords[0]));
        let inst = parse_tsplib(&euc_text(&coords), GeoMode::Haversine).unwrap();
        let n = inst.n();
        for i in 0..n {
            for j in 0..n {
                let w = inst.normalized.weight(i, j);
                prop_assert!((0.0..=1.0).contains(&w));
                let raw = inst.raw_distance(i, j);
                prop_assert!((inst.denormalize(w) - raw).abs() <= 1e-9 * raw.max(1.0));
                prop_assert_eq!(raw, inst.raw_distance(j, i));
            }
        }
    }
}
