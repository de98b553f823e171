//! TSP instances, decision instances and edge-to-vertex incidence.

use std::sync::Arc;

use crate::autodiff::EdgeEndpoints;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Tolerance used when checking symmetry and coordinate consistency.
const WEIGHT_TOL: f64 = 1e-12;

/// Complete weighted graph on `n` cities with weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    n: usize,
    weights: Vec<f64>,
    coords: Option<Vec<[f64; 2]>>,
    pub optimal_cost: Option<f64>,
}

impl TspInstance {
    /// Builds an instance from a row-major `n×n` weight matrix.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        let inst = TspInstance {
            n,
            weights,
            coords: None,
            optimal_cost: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Euclidean instance; weights are the pairwise distances.
    pub fn from_coords(coords: Vec<[f64; 2]>) -> Result<Self> {
        let n = coords.len();
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = euclidean(coords[i], coords[j]);
                weights[i * n + j] = d;
                weights[j * n + i] = d;
            }
        }
        let inst = TspInstance {
            n,
            weights,
            coords: Some(coords),
            optimal_cost: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_optimal_cost(mut self, cost: f64) -> Self {
        self.optimal_cost = Some(cost);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n < 3 {
            return Err(Error::InvalidInstance(format!("need at least 3 cities, got {n}")));
        }
        if self.weights.len() != n * n {
            return Err(Error::InvalidInstance(format!(
                "{} weights for {n} cities",
                self.weights.len()
            )));
        }
        for i in 0..n {
            if self.weight(i, i) != 0.0 {
                return Err(Error::InvalidInstance(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let w = self.weight(i, j);
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::InvalidInstance(format!("weight {w} at ({i},{j}) outside [0,1]")));
                }
                if (w - self.weight(j, i)).abs() > WEIGHT_TOL {
                    return Err(Error::InvalidInstance(format!("asymmetric weight at ({i},{j})")));
                }
            }
        }
        if let Some(coords) = &self.coords {
            if coords.len() != n {
                return Err(Error::InvalidInstance("coordinate count differs from n".into()));
            }
            for i in 0..n {
                for j in i + 1..n {
                    if (euclidean(coords[i], coords[j]) - self.weight(i, j)).abs() > WEIGHT_TOL {
                        return Err(Error::InvalidInstance(format!(
                            "weight ({i},{j}) disagrees with coordinates"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    /// Weights of the `n(n−1)/2` undirected edges in lexicographic `(i, j)` order.
    pub fn edge_weights(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push(self.weight(i, j));
            }
        }
        out
    }

    /// Same graph with city `i` renamed to `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n;
        if !is_permutation(perm, n) {
            return Err(Error::InvalidArgument("relabeling is not a permutation".into()));
        }
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                weights[perm[i] * n + perm[j]] = self.weight(i, j);
            }
        }
        let coords = self.coords.as_ref().map(|c| {
            let mut out = vec![[0.0; 2]; n];
            for i in 0..n {
                out[perm[i]] = c[i];
            }
            out
        });
        Ok(TspInstance {
            n,
            weights,
            coords,
            optimal_cost: self.optimal_cost,
        })
    }
}

pub(crate) fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn is_permutation(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &c in order {
        if c >= n || seen[c] {
            return false;
        }
        seen[c] = true;
    }
    true
}

/// A graph paired with a target cost: does a tour cheaper than the target exist?
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionInstance {
    pub graph: Arc<TspInstance>,
    pub target_cost: f64,
    pub label: Option<bool>,
}

impl DecisionInstance {
    pub fn new(graph: Arc<TspInstance>, target_cost: f64, label: Option<bool>) -> Self {
        DecisionInstance {
            graph,
            target_cost,
            label,
        }
    }

    /// Target cost divided by the number of cities; this is what the model sees.
    pub fn normalized_target(&self) -> f64 {
        self.target_cost / self.graph.n() as f64
    }
}

/// Edge-to-vertex incidence of a complete graph (or a disjoint union of
/// complete graphs). Edge `e = (i, j)` with `i < j` has source `i` and
/// target `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrices {
    pub num_vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
}

impl IncidenceMatrices {
    /// Unweighted incidence of the complete graph on `n ≥ 2` vertices.
    pub fn complete_graph(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInstance(format!("complete graph needs 2 vertices, got {n}")));
        }
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let weights = vec![0.0; edges.len()];
        Ok(IncidenceMatrices {
            num_vertices: n,
            edges,
            weights,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    fn dense(&self, pick: impl Fn((usize, usize)) -> [Option<usize>; 2]) -> Tensor<f64> {
        let v = self.num_vertices;
        let mut data = vec![0.0; self.edges.len() * v];
        for (e, &pair) in self.edges.iter().enumerate() {
            for col in pick(pair).into_iter().flatten() {
                data[e * v + col] += 1.0;
            }
        }
        Tensor::matrix(self.edges.len(), v, data).expect("incidence shape")
    }

    /// `S`: one at each edge's source column.
    pub fn source_matrix(&self) -> Tensor<f64> {
        self.dense(|(s, _)| [Some(s), None])
    }

    /// `T`: one at each edge's target column.
    pub fn target_matrix(&self) -> Tensor<f64> {
        self.dense(|(_, t)| [None, Some(t)])
    }

    /// `EV = S + T`.
    pub fn ev_matrix(&self) -> Tensor<f64> {
        self.dense(|(s, t)| [Some(s), Some(t)])
    }

    pub fn endpoints(&self) -> EdgeEndpoints {
        EdgeEndpoints {
            pairs: self.edges.clone(),
            num_vertices: self.num_vertices,
        }
    }
}

/// One edge row per unordered city pair, in lexicographic order.
pub fn build_incidence(instance: &TspInstance) -> Result<IncidenceMatrices> {
    instance.validate()?;
    let mut inc = IncidenceMatrices::complete_graph(instance.n())?;
    inc.weights = instance.edge_weights();
    Ok(inc)
}
