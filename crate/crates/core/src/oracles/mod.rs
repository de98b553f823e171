//! Exact tour oracles and the classical baselines.

mod exact;
mod heuristics;

pub use exact::{brute_force_optimal, held_karp, BRUTE_FORCE_LIMIT, HELD_KARP_LIMIT};
pub use heuristics::{
    calibrate_sa, mean_relative_excess, nearest_neighbor, simulated_annealing, SaParams,
};

use crate::error::{Error, Result};
use crate::graph::{is_permutation, TspInstance};

/// A Hamiltonian cycle and its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tour {
    pub order: Vec<usize>,
    pub cost: f64,
}

impl Tour {
    pub fn new(instance: &TspInstance, order: Vec<usize>) -> Result<Self> {
        let cost = tour_cost(instance, &order)?;
        Ok(Tour { order, cost })
    }
}

/// Cyclic sum of consecutive weights, closing edge included.
pub fn tour_cost(instance: &TspInstance, order: &[usize]) -> Result<f64> {
    let n = instance.n();
    if !is_permutation(order, n) {
        return Err(Error::InvalidArgument(format!(
            "tour is not a permutation of 0..{n}"
        )));
    }
    Ok(cyclic_cost(instance, order))
}

pub(crate) fn cyclic_cost(instance: &TspInstance, order: &[usize]) -> f64 {
    let n = order.len();
    (0..n).fold(0.0, |acc, i| acc + instance.weight(order[i], order[(i + 1) % n]))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_square() -> TspInstance {
        // side 1 with diagonals √2 would leave [0,1]; scale by 1/2
        TspInstance::from_coords(vec![[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]).unwrap()
    }

    #[test]
    fn triangle_has_one_cost() {
        let t = TspInstance::from_coords(vec![[0.0, 0.0], [0.3, 0.0], [0.0, 0.4]]).unwrap();
        let expect = 0.3 + 0.4 + 0.5;
        for order in [[0, 1, 2], [2, 1, 0], [1, 0, 2]] {
            assert!((tour_cost(&t, &order).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn square_perimeter() {
        let sq = unit_square();
        assert!((tour_cost(&sq, &[0, 1, 2, 3]).unwrap() - 2.0).abs() < 1e-12);
        // rotation and reflection
        assert_eq!(tour_cost(&sq, &[2, 3, 0, 1]).unwrap(), tour_cost(&sq, &[0, 1, 2, 3]).unwrap());
        assert!((tour_cost(&sq, &[3, 2, 1, 0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_permutations() {
        let sq = unit_square();
        assert!(tour_cost(&sq, &[0, 1, 1, 3]).is_err());
        assert!(tour_cost(&sq, &[0, 1, 2]).is_err());
        assert!(tour_cost(&sq, &[0, 1, 2, 4]).is_err());
    }
}
