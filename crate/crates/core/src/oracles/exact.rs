use super::{cyclic_cost, Tour};
use crate::error::{Error, Result};
use crate::graph::TspInstance;

pub const BRUTE_FORCE_LIMIT: usize = 10;
pub const HELD_KARP_LIMIT: usize = 20;

/// Enumerates every cyclic tour starting at city 0 with `order[1] <
/// order[n-1]`, i.e. each of the `(n−1)!/2` distinct tours exactly once.
pub fn brute_force_optimal(instance: &TspInstance) -> Result<Tour> {
    let n = instance.n();
    if !(3..=BRUTE_FORCE_LIMIT).contains(&n) {
        return Err(Error::Capacity {
            solver: "brute force",
            limit: BRUTE_FORCE_LIMIT,
            n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = Tour {
        order: order.clone(),
        cost: f64::INFINITY,
    };
    permute(instance, &mut order, 1, &mut best);
    Ok(best)
}

fn permute(instance: &TspInstance, order: &mut [usize], k: usize, best: &mut Tour) {
    let n = order.len();
    if k == n {
        if order[1] < order[n - 1] {
            let cost = cyclic_cost(instance, order);
            if cost < best.cost {
                best.cost = cost;
                best.order.copy_from_slice(order);
            }
        }
        return;
    }
    for i in k..n {
        order.swap(k, i);
        permute(instance, order, k + 1, best);
        order.swap(k, i);
    }
}

/// Subset dynamic program over tours anchored at city 0.
///
/// `cost[mask][j]` is the cheapest path that leaves city 0, visits exactly
/// the cities in `mask` (bit `c − 1` for city `c`) and ends at city `j + 1`.
pub fn held_karp(instance: &TspInstance) -> Result<Tour> {
    let n = instance.n();
    if !(3..=HELD_KARP_LIMIT).contains(&n) {
        return Err(Error::Capacity {
            solver: "Held-Karp",
            limit: HELD_KARP_LIMIT,
            n,
        });
    }
    let m = n - 1;
    let full = 1usize << m;
    let mut cost = vec![f64::INFINITY; full * m];
    let mut parent = vec![u8::MAX; full * m];
    for j in 0..m {
        cost[(1 << j) * m + j] = instance.weight(0, j + 1);
    }
    for mask in 1..full {
        for j in 0..m {
            if mask & (1 << j) == 0 {
                continue;
            }
            let here = cost[mask * m + j];
            if here == f64::INFINITY {
                continue;
            }
            let mut rest = !mask & (full - 1);
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let next = mask | (1 << k);
                let candidate = here + instance.weight(j + 1, k + 1);
                let slot = &mut cost[next * m + k];
                if candidate < *slot {
                    *slot = candidate;
                    parent[next * m + k] = j as u8;
                }
            }
        }
    }

    let last_mask = full - 1;
    let mut best_end = 0;
    let mut best = f64::INFINITY;
    for j in 0..m {
        let c = cost[last_mask * m + j] + instance.weight(j + 1, 0);
        if c < best {
            best = c;
            best_end = j;
        }
    }

    let mut order = Vec::with_capacity(n);
    let (mut mask, mut j) = (last_mask, best_end);
    loop {
        order.push(j + 1);
        let p = parent[mask * m + j];
        mask &= !(1 << j);
        if p == u8::MAX {
            break;
        }
        j = p as usize;
    }
    order.push(0);
    order.reverse();
    debug_assert_eq!(order.len(), n);
    let cost = cyclic_cost(instance, &order);
    Ok(Tour { order, cost })
}
