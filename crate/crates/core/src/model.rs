//! The decision-TSP graph neural network.
//!
//! Every edge gets an embedding initialized from its weight and the
//! normalized target cost. Vertices start from one shared learned vector.
//! Each message-passing iteration first updates vertices from the summed
//! messages of their incident edges, then updates edges from the messages
//! of their (already updated) endpoints. After `t_max` iterations every
//! edge votes with a logit; the prediction is the logistic of the mean
//! vote of the instance's edges.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{sigmoid, EdgeEndpoints, LstmInput, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{build_incidence, DecisionInstance, IncidenceMatrices, TspInstance};
use crate::nn::{LstmCell, Mlp};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const VERTEX_INIT: &str = "vertex_init";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    /// Message-passing iterations.
    pub t_max: usize,
    /// Layer widths of both message MLPs; the last must equal `d`.
    pub msg_sizes: Vec<usize>,
    /// Hidden widths of the edge-initialization MLP (a linear layer to `d` follows).
    pub init_hidden: Vec<usize>,
    /// Hidden widths of the vote MLP (a linear layer to one logit follows).
    pub vote_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 64,
            t_max: 32,
            msg_sizes: vec![64, 64, 64],
            init_hidden: vec![8, 16, 32],
            vote_hidden: vec![64, 64],
        }
    }
}

impl ModelConfig {
    /// Same architecture shape with every width set to `d`.
    pub fn small(d: usize, t_max: usize) -> Self {
        ModelConfig {
            d,
            t_max,
            msg_sizes: vec![d, d, d],
            init_hidden: vec![8, 16, 32],
            vote_hidden: vec![d, d],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = self
            .msg_sizes
            .iter()
            .chain(&self.init_hidden)
            .chain(&self.vote_hidden);
        if self.d == 0 || self.t_max == 0 || sizes.clone().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("model sizes must be positive".into()));
        }
        if self.msg_sizes.last() != Some(&self.d) {
            return Err(Error::InvalidArgument(format!(
                "message MLP must end at width d={}, got {:?}",
                self.d, self.msg_sizes
            )));
        }
        Ok(())
    }
}

/// Layer descriptors of the seven learned components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub edge_init: Mlp,
    pub vertex_msg: Mlp,
    pub edge_msg: Mlp,
    pub vertex_update: LstmCell,
    pub edge_update: LstmCell,
    pub edge_vote: Mlp,
}

impl Architecture {
    pub fn new(config: &ModelConfig) -> Self {
        let d = config.d;
        let mut init_sizes = config.init_hidden.clone();
        init_sizes.push(d);
        let mut vote_sizes = config.vote_hidden.clone();
        vote_sizes.push(1);
        Architecture {
            edge_init: Mlp::new("edge_init", 2, &init_sizes),
            vertex_msg: Mlp::new("vertex_msg", d, &config.msg_sizes),
            edge_msg: Mlp::new("edge_msg", d, &config.msg_sizes),
            vertex_update: LstmCell::new("vertex_update", d, d),
            edge_update: LstmCell::new("edge_update", d, d),
            edge_vote: Mlp::new("edge_vote", d, &vote_sizes),
        }
    }
}

/// Model configuration together with all trainable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    arch: Architecture,
    store: ParamStore<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Glorot kernels, zero biases, unit norm gains, forget shift one, and
    /// a Glorot-initialized shared vertex vector.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let arch = Architecture::new(&config);
        let mut store = ParamStore::new();
        let v = crate::autodiff::glorot_init::<T, R>([1, config.d], rng);
        store.insert(VERTEX_INIT, Tensor::vector(v.into_data()));
        arch.edge_init.init_params(&mut store, rng);
        arch.vertex_msg.init_params(&mut store, rng);
        arch.edge_msg.init_params(&mut store, rng);
        arch.vertex_update.init_params(&mut store, rng);
        arch.edge_update.init_params(&mut store, rng);
        arch.edge_vote.init_params(&mut store, rng);
        Ok(ModelParams {
            config,
            arch,
            store,
        })
    }

    /// Every parameter set to zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut p = Self::init(config, &mut rng)?;
        p.store.zero_values();
        Ok(p)
    }

    /// Wraps an existing store after checking it holds exactly the
    /// parameters this configuration needs.
    pub fn from_store(config: ModelConfig, store: ParamStore<T>) -> Result<Self> {
        let reference = Self::zeros(config.clone())?;
        for (name, p) in reference.store.iter() {
            let got = store.get(name).ok_or_else(|| {
                Error::Checkpoint(format!("parameter `{name}` missing"))
            })?;
            if got.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, model config needs {:?}",
                    got.shape(),
                    p.value.shape()
                )));
            }
        }
        if let Some(extra) = store.names().find(|n| !reference.store.contains(n)) {
            return Err(Error::Checkpoint(format!("unexpected parameter `{extra}`")));
        }
        Ok(ModelParams {
            arch: Architecture::new(&config),
            config,
            store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn into_store(self) -> ParamStore<T> {
        self.store
    }
}

/// Disjoint union of several instances, each with its own target cost.
#[derive(Debug, Clone)]
pub struct GraphBatch<T> {
    pub endpoints: Arc<EdgeEndpoints>,
    /// `[w, C/n]` per edge.
    pub edge_features: Tensor<T>,
    /// Edge range boundaries of each instance (`len + 1` entries).
    pub edge_offsets: Vec<usize>,
}

impl<T: Scalar> GraphBatch<T> {
    /// `items` pairs each graph with its normalized target `C/n`.
    pub fn new(items: &[(&TspInstance, f64)]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut pairs = Vec::new();
        let mut features = Vec::new();
        let mut offsets = vec![0];
        let mut vertex_base = 0;
        for &(graph, c_norm) in items {
            let inc = build_incidence(graph)?;
            for (&(s, t), &w) in inc.edges.iter().zip(&inc.weights) {
                pairs.push((s + vertex_base, t + vertex_base));
                features.push(T::from_f64_lossy(w));
                features.push(T::from_f64_lossy(c_norm));
            }
            vertex_base += graph.n();
            offsets.push(pairs.len());
        }
        let e = pairs.len();
        Ok(GraphBatch {
            endpoints: Arc::new(EdgeEndpoints {
                pairs,
                num_vertices: vertex_base,
            }),
            edge_features: Tensor::matrix(e, 2, features)?,
            edge_offsets: offsets,
        })
    }

    pub fn from_decisions(batch: &[DecisionInstance]) -> Result<Self> {
        let items: Vec<_> = batch
            .iter()
            .map(|x| (x.graph.as_ref(), x.normalized_target()))
            .collect();
        Self::new(&items)
    }

    pub fn from_incidence(inc: &IncidenceMatrices, c_norm: f64) -> Result<Self> {
        let mut features = Vec::with_capacity(2 * inc.num_edges());
        for &w in &inc.weights {
            features.push(T::from_f64_lossy(w));
            features.push(T::from_f64_lossy(c_norm));
        }
        Ok(GraphBatch {
            endpoints: Arc::new(inc.endpoints()),
            edge_features: Tensor::matrix(inc.num_edges(), 2, features)?,
            edge_offsets: vec![0, inc.num_edges()],
        })
    }

    pub fn num_instances(&self) -> usize {
        self.edge_offsets.len() - 1
    }
}

/// Vertex and edge embeddings with their recurrent cell states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingState {
    pub vertices: Var,
    pub vertex_cells: Var,
    pub edges: Var,
    pub edge_cells: Var,
    pub t: usize,
}

/// Initial embeddings: `E_init([w, C/n])` per edge, the shared vector per
/// vertex, zero cell states.
pub fn init_embeddings<T: Scalar>(
    tape: &mut Tape<T>,
    batch: &GraphBatch<T>,
    params: &ModelParams<T>,
) -> Result<EmbeddingState> {
    let d = params.config.d;
    let store = &params.store;
    let features = tape.constant(batch.edge_features.clone());
    let edges = params.arch.edge_init.forward(tape, store, features)?;
    let v0 = tape.param(store, VERTEX_INIT)?;
    let vertices = tape.broadcast_rows(v0, batch.endpoints.num_vertices);
    let vertex_cells = tape.constant(Tensor::zeros(&[batch.endpoints.num_vertices, d]));
    let edge_cells = tape.constant(Tensor::zeros(&[batch.endpoints.pairs.len(), d]));
    Ok(EmbeddingState {
        vertices,
        vertex_cells,
        edges,
        edge_cells,
        t: 0,
    })
}

/// One round: vertices from `EVᵀ × E_msg(E)`, then edges from `EV × V_msg(V)`.
pub fn mp_iteration<T: Scalar>(
    tape: &mut Tape<T>,
    state: EmbeddingState,
    endpoints: &Arc<EdgeEndpoints>,
    params: &ModelParams<T>,
) -> Result<EmbeddingState> {
    if state.t >= params.config.t_max {
        return Err(Error::InvalidArgument(format!(
            "iteration {} exceeds t_max {}",
            state.t, params.config.t_max
        )));
    }
    let (arch, store) = (&params.arch, &params.store);

    let edge_msgs = arch.edge_msg.forward(tape, store, state.edges)?;
    let to_vertices = tape.scatter_to_vertices(edge_msgs, endpoints)?;
    let (vertices, vertex_cells) =
        arch.vertex_update
            .step(tape, store, to_vertices, state.vertices, state.vertex_cells)?;

    // EV·(M·K) = (EV·M)·K, and there are far fewer vertices than edges.
    let vertex_msgs = arch.vertex_msg.forward(tape, store, vertices)?;
    let k_in = arch.edge_update.input_kernel(tape, store)?;
    let projected = tape.matmul(vertex_msgs, k_in)?;
    let to_edges = LstmInput::EdgeSums(projected, Arc::clone(endpoints));
    let (edges, edge_cells) = arch
        .edge_update
        .step_projected(tape, store, to_edges, state.edges, state.edge_cells)?;

    Ok(EmbeddingState {
        vertices,
        vertex_cells,
        edges,
        edge_cells,
        t: state.t + 1,
    })
}

/// Per-edge logits and the per-instance mean logit.
pub fn vote<T: Scalar>(
    tape: &mut Tape<T>,
    state: EmbeddingState,
    batch: &GraphBatch<T>,
    params: &ModelParams<T>,
) -> Result<(Var, Var)> {
    if state.t != params.config.t_max {
        return Err(Error::InvalidArgument(format!(
            "vote after {} of {} iterations",
            state.t, params.config.t_max
        )));
    }
    let logits = params.arch.edge_vote.forward(tape, &params.store, state.edges)?;
    let means = tape.segment_mean(logits, &batch.edge_offsets)?;
    Ok((logits, means))
}

/// Runs the whole network on a batch; returns `(edge logits, mean logits)`.
pub fn run_batch<T: Scalar>(
    tape: &mut Tape<T>,
    batch: &GraphBatch<T>,
    params: &ModelParams<T>,
) -> Result<(Var, Var)> {
    let mut state = init_embeddings(tape, batch, params)?;
    for _ in 0..params.config.t_max {
        state = mp_iteration(tape, state, &batch.endpoints, params)?;
    }
    vote(tape, state, batch, params)
}

/// Probability that `instance` admits a tour cheaper than `target_cost`.
pub fn forward<T: Scalar>(instance: &TspInstance, target_cost: f64, params: &ModelParams<T>) -> Result<T> {
    if !(target_cost > 0.0) {
        return Err(Error::InvalidArgument(format!("target cost must be positive, got {target_cost}")));
    }
    let c_norm = target_cost / instance.n() as f64;
    let batch = GraphBatch::new(&[(instance, c_norm)])?;
    let mut tape = Tape::new();
    let (_, means) = run_batch(&mut tape, &batch, params)?;
    Ok(sigmoid(tape.value(means).data()[0]))
}

/// Per-edge logits in lexicographic edge order, for inspection and tests.
pub fn edge_logits<T: Scalar>(instance: &TspInstance, target_cost: f64, params: &ModelParams<T>) -> Result<Vec<T>> {
    let batch = GraphBatch::new(&[(instance, target_cost / instance.n() as f64)])?;
    let mut tape = Tape::new();
    let (logits, _) = run_batch(&mut tape, &batch, params)?;
    Ok(tape.value(logits).data().to_vec())
}

/// Predictions for a batch evaluated as one disjoint union.
pub fn forward_batch<T: Scalar>(batch: &[DecisionInstance], params: &ModelParams<T>) -> Result<Vec<T>> {
    let graph = GraphBatch::from_decisions(batch)?;
    let mut tape = Tape::new();
    let (_, means) = run_batch(&mut tape, &graph, params)?;
    Ok(tape.value(means).data().iter().map(|&x| sigmoid(x)).collect())
}

/// Mean binary cross entropy over a labeled batch. Gradients land in the
/// parameter store; returns the loss and the per-instance predictions.
pub fn loss_and_gradients<T: Scalar>(
    batch: &[DecisionInstance],
    params: &mut ModelParams<T>,
) -> Result<(T, Vec<T>)> {
    let labels = batch
        .iter()
        .map(|x| match x.label {
            Some(true) => Ok(T::one()),
            Some(false) => Ok(T::zero()),
            None => Err(Error::InvalidArgument("training instance without label".into())),
        })
        .collect::<Result<Vec<T>>>()?;
    let graph = GraphBatch::from_decisions(batch)?;
    let mut tape = Tape::new();
    let (_, means) = run_batch(&mut tape, &graph, params)?;
    let predictions = tape.value(means).data().iter().map(|&x| sigmoid(x)).collect();
    let loss = tape.bce_with_logits(means, &labels)?;
    let value = tape.value(loss).data()[0];
    tape.backward(loss, &mut params.store)?;
    Ok((value, predictions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle(scale: f64) -> TspInstance {
        TspInstance::from_coords(vec![[0.0, 0.0], [0.5 * scale, 0.0], [0.0, 0.4 * scale]]).unwrap()
    }

    fn small_params(seed: u64) -> ModelParams<f64> {
        ModelParams::init(ModelConfig::small(8, 3), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_parameters_predict_one_half() {
        let p = ModelParams::<f64>::zeros(ModelConfig::small(8, 3)).unwrap();
        assert_eq!(forward(&triangle(1.0), 1.0, &p).unwrap(), 0.5);
        assert_eq!(forward(&triangle(0.5), 0.2, &p).unwrap(), 0.5);
    }

    #[test]
    fn equal_edges_get_equal_initial_embeddings() {
        let square = TspInstance::from_coords(vec![[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]).unwrap();
        let p = small_params(1);
        let batch = GraphBatch::new(&[(&square, 0.5)]).unwrap();
        let mut tape = Tape::new();
        let s = init_embeddings(&mut tape, &batch, &p).unwrap();
        let e = tape.value(s.edges);
        // edges (0,1) and (0,3) both have length 0.5
        assert_eq!(e.row(0), e.row(2));
        assert_ne!(e.row(0), e.row(1));
        let v = tape.value(s.vertices);
        assert!((1..4).all(|i| v.row(i) == v.row(0)));
        assert!(tape.value(s.edge_cells).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_edge_init_gives_zero_edge_embeddings() {
        let mut p = small_params(2);
        let names: Vec<String> = p.store().names().filter(|n| n.starts_with("edge_init")).map(String::from).collect();
        for n in names {
            p.store_mut().value_mut(&n).unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let batch = GraphBatch::new(&[(&triangle(1.0), 0.5)]).unwrap();
        let mut tape = Tape::new();
        let s = init_embeddings(&mut tape, &batch, &p).unwrap();
        assert!(tape.value(s.edges).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn target_cost_changes_every_initial_edge_embedding() {
        let p = small_params(3);
        let g = triangle(1.0);
        let embed = |c: f64| {
            let batch = GraphBatch::new(&[(&g, c)]).unwrap();
            let mut tape = Tape::new();
            let s = init_embeddings(&mut tape, &batch, &p).unwrap();
            tape.value(s.edges).clone()
        };
        let (a, b) = (embed(0.4), embed(0.6));
        for e in 0..3 {
            let diff = a.row(e).iter().zip(b.row(e)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(diff > 0.0, "edge {e} unchanged");
        }
    }

    #[test]
    fn zero_message_weights_give_zero_aggregates() {
        let mut p = small_params(4);
        let names: Vec<String> = p
            .store()
            .names()
            .filter(|n| n.starts_with("edge_msg") || n.starts_with("vertex_msg"))
            .map(String::from)
            .collect();
        for n in names {
            p.store_mut().value_mut(&n).unwrap().data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let batch = GraphBatch::new(&[(&triangle(1.0), 0.5)]).unwrap();
        let mut tape = Tape::new();
        let s = init_embeddings(&mut tape, &batch, &p).unwrap();
        let s1 = mp_iteration(&mut tape, s, &batch.endpoints, &p).unwrap();
        // identical zero input to every vertex keeps vertices identical
        let v = tape.value(s1.vertices);
        assert_eq!(v.row(0), v.row(1));
        assert_eq!(v.row(1), v.row(2));
        assert_eq!(s1.t, 1);
    }

    #[test]
    fn mp_iteration_refuses_past_t_max() {
        let p = small_params(5);
        let batch = GraphBatch::new(&[(&triangle(1.0), 0.5)]).unwrap();
        let mut tape = Tape::new();
        let mut s = init_embeddings(&mut tape, &batch, &p).unwrap();
        assert!(vote(&mut tape, s, &batch, &p).is_err());
        for _ in 0..3 {
            s = mp_iteration(&mut tape, s, &batch.endpoints, &p).unwrap();
        }
        assert!(mp_iteration(&mut tape, s, &batch.endpoints, &p).is_err());
    }

    #[test]
    fn vote_of_opposite_logits_is_one_half() {
        assert_eq!(sigmoid((2.0f64 + -2.0) / 2.0), 0.5);
    }

    #[test]
    fn disjoint_triangles_do_not_interact() {
        let p = small_params(6);
        let g = triangle(1.0);
        let batch = GraphBatch::new(&[(&g, 0.5), (&g, 0.5)]).unwrap();
        let mut tape = Tape::new();
        let mut s = init_embeddings(&mut tape, &batch, &p).unwrap();
        for _ in 0..3 {
            s = mp_iteration(&mut tape, s, &batch.endpoints, &p).unwrap();
            let v = tape.value(s.vertices);
            let e = tape.value(s.edges);
            for i in 0..3 {
                assert_eq!(v.row(i), v.row(i + 3));
                assert_eq!(e.row(i), e.row(i + 3));
            }
        }
    }

    #[test]
    fn forward_is_deterministic_and_in_open_interval() {
        let p = small_params(7);
        let a = forward(&triangle(1.0), 1.1, &p).unwrap();
        let b = forward(&triangle(1.0), 1.1, &p).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a > 0.0 && a < 1.0);
        assert!(forward(&triangle(1.0), 0.0, &p).is_err());
    }

    #[test]
    fn batch_of_copies_gives_identical_predictions() {
        let p = small_params(8);
        let g = Arc::new(triangle(1.0));
        let x = DecisionInstance::new(g, 1.1, None);
        let out = forward_batch(&[x.clone(), x.clone(), x.clone()], &p).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(out[1], out[2]);
        assert_eq!(out[0], forward(&x.graph, 1.1, &p).unwrap());
    }

    #[test]
    fn from_store_checks_shapes() {
        let p = small_params(9);
        let store = p.store().clone();
        assert!(ModelParams::from_store(ModelConfig::small(8, 3), store.clone()).is_ok());
        assert!(ModelParams::from_store(ModelConfig::small(16, 3), store).is_err());
    }
}
