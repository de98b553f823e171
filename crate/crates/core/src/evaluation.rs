//! Measurement protocols: accuracy sweeps, acceptance curves, baseline
//! true-positive rates, and cost extraction by binary search.
//!
//! Predictions run in parallel over fixed-size chunks and are reassembled
//! in input order, so every result is independent of the thread count.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generate::{decision_at, make_dual_pair, DatasetRecord, GeneratorTag};
use crate::graph::{DecisionInstance, TspInstance};
use crate::model::{forward_batch, ModelParams};
use crate::oracles::{nearest_neighbor, simulated_annealing, SaParams};

/// Anything that maps decision instances to YES probabilities.
pub trait Predictor: Sync {
    fn predict(&self, batch: &[DecisionInstance]) -> Result<Vec<f64>>;
}

impl Predictor for ModelParams<f64> {
    fn predict(&self, batch: &[DecisionInstance]) -> Result<Vec<f64>> {
        forward_batch(batch, self)
    }
}

/// Exact threshold predictor: 1 when the target exceeds the optimum
/// attached to the graph, 0 otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThresholdOracle;

impl Predictor for ThresholdOracle {
    fn predict(&self, batch: &[DecisionInstance]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|x| {
                let opt = x.graph.optimal_cost.ok_or(Error::MissingOptimum)?;
                Ok(if x.target_cost > opt { 1.0 } else { 0.0 })
            })
            .collect()
    }
}

/// Predicts the same probability for everything.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn predict(&self, batch: &[DecisionInstance]) -> Result<Vec<f64>> {
        Ok(vec![self.0; batch.len()])
    }
}

/// Predictions for `instances`, evaluated `batch_size` at a time.
pub fn predict_all<P: Predictor + ?Sized>(
    predictor: &P,
    instances: &[DecisionInstance],
    batch_size: usize,
) -> Result<Vec<f64>> {
    let chunks: Vec<Vec<f64>> = instances
        .par_chunks(batch_size.max(1))
        .map(|chunk| predictor.predict(chunk))
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn on_correct_side(prediction: f64, label: Option<bool>) -> bool {
    match label {
        Some(true) => prediction > 0.5,
        Some(false) => prediction < 0.5,
        None => false,
    }
}

/// Accuracy with the number of decision instances behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub accuracy: f64,
    pub count: usize,
}

/// Fraction of dual-pair instances at `±x` predicted on the correct side of 0.5.
pub fn eval_accuracy<P: Predictor + ?Sized>(
    predictor: &P,
    records: &[DatasetRecord],
    x: f64,
    batch_size: usize,
) -> Result<Accuracy> {
    let mut instances = Vec::with_capacity(2 * records.len());
    for r in records {
        let pair = make_dual_pair(r, x)?;
        instances.push(pair.positive);
        instances.push(pair.negative);
    }
    let preds = predict_all(predictor, &instances, batch_size)?;
    let hits = preds
        .iter()
        .zip(&instances)
        .filter(|(&p, inst)| on_correct_side(p, inst.label))
        .count();
    Ok(Accuracy {
        accuracy: if instances.is_empty() {
            0.0
        } else {
            hits as f64 / instances.len() as f64
        },
        count: instances.len(),
    })
}

/// One cell of an accuracy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Size or distribution label.
    pub axis: String,
    pub deviation: f64,
    pub accuracy: f64,
    pub count: usize,
    /// False when some ground truth in the cell is a heuristic estimate.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub axis_name: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\tdeviation\taccuracy\tcount\texact\n", self.axis_name);
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", r.axis, r.deviation, r.accuracy, r.count, r.exact);
        }
        out
    }

    pub fn get(&self, axis: &str, deviation: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.axis == axis && r.deviation == deviation)
    }
}

/// Accuracy over labeled groups of records (sizes, distributions, ...)
/// at each deviation.
pub fn accuracy_sweep<P: Predictor + ?Sized>(
    predictor: &P,
    axis_name: &str,
    groups: &[(String, Vec<DatasetRecord>)],
    deviations: &[f64],
    batch_size: usize,
) -> Result<SweepResult> {
    let mut rows = Vec::new();
    for (label, records) in groups {
        let exact = records.iter().all(|r| r.exact);
        for &x in deviations {
            let a = eval_accuracy(predictor, records, x, batch_size)?;
            rows.push(SweepRow {
                axis: label.clone(),
                deviation: x,
                accuracy: a.accuracy,
                count: a.count,
                exact,
            });
        }
    }
    Ok(SweepResult {
        axis_name: axis_name.to_string(),
        rows,
    })
}

/// Size sweep: `groups` holds one record set per city count.
pub fn size_sweep<P: Predictor + ?Sized>(
    predictor: &P,
    groups: &[(usize, Vec<DatasetRecord>)],
    deviations: &[f64],
    batch_size: usize,
) -> Result<SweepResult> {
    let labeled: Vec<(String, Vec<DatasetRecord>)> =
        groups.iter().map(|(n, r)| (n.to_string(), r.clone())).collect();
    accuracy_sweep(predictor, "n", &labeled, deviations, batch_size)
}

/// Distribution sweep: one record set per generator.
pub fn distribution_eval<P: Predictor + ?Sized>(
    predictor: &P,
    groups: &[(GeneratorTag, Vec<DatasetRecord>)],
    deviations: &[f64],
    batch_size: usize,
) -> Result<SweepResult> {
    let labeled: Vec<(String, Vec<DatasetRecord>)> =
        groups.iter().map(|(t, r)| (t.to_string(), r.clone())).collect();
    accuracy_sweep(predictor, "distribution", &labeled, deviations, batch_size)
}

/// Mean prediction against signed deviation from the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceCurve {
    /// Label of the size class the instances come from.
    pub size_class: String,
    pub deviations: Vec<f64>,
    pub mean_prediction: Vec<f64>,
    pub counts: Vec<usize>,
}

impl AcceptanceCurve {
    /// Forward differences of the mean prediction; entry `i` covers
    /// `deviations[i]..deviations[i+1]`.
    pub fn differences(&self) -> Vec<f64> {
        self.mean_prediction.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Difference quotients of the mean prediction per unit deviation.
    pub fn derivatives(&self) -> Vec<f64> {
        self.differences()
            .iter()
            .zip(self.deviations.windows(2))
            .map(|(dm, w)| dm / (w[1] - w[0]))
            .collect()
    }

    /// Midpoint of the interval where the curve rises fastest.
    pub fn critical_point(&self) -> Option<f64> {
        let d = self.derivatives();
        let (i, _) = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        Some(0.5 * (self.deviations[i] + self.deviations[i + 1]))
    }

    /// Largest drop between any grid point and a later one (0 for a
    /// non-decreasing curve).
    pub fn max_decrease(&self) -> f64 {
        let mut running_max = f64::NEG_INFINITY;
        let mut worst: f64 = 0.0;
        for &m in &self.mean_prediction {
            running_max = running_max.max(m);
            worst = worst.max(running_max - m);
        }
        worst
    }

    /// Rows of `size deviation mean_prediction count difference derivative`;
    /// the first row of a curve has empty difference columns.
    pub fn to_tsv_rows(&self, out: &mut String) {
        let diffs = self.differences();
        let ders = self.derivatives();
        for i in 0..self.deviations.len() {
            let (dm, der) = if i == 0 {
                (String::new(), String::new())
            } else {
                (diffs[i - 1].to_string(), ders[i - 1].to_string())
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{dm}\t{der}",
                self.size_class, self.deviations[i], self.mean_prediction[i], self.counts[i]
            );
        }
    }
}

pub const CURVE_HEADER: &str = "size\tdeviation\tmean_prediction\tcount\tdifference\tderivative";

pub fn curves_to_tsv(curves: &[AcceptanceCurve]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for c in curves {
        c.to_tsv_rows(&mut out);
    }
    out
}

/// Symmetric grid `-max, -max+step, ..., max`, built from integer steps so
/// it contains 0 exactly.
pub fn symmetric_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(max > 0.0 && step > 0.0 && step <= max) {
        return Err(Error::InvalidArgument(format!("bad grid max {max} step {step}")));
    }
    let k = (max / step + 1e-9).floor() as i64;
    Ok((-k..=k).map(|i| ((i as f64 * step) * 1e12).round() / 1e12).collect())
}

pub fn acceptance_curve<P: Predictor + ?Sized>(
    predictor: &P,
    size_class: &str,
    records: &[DatasetRecord],
    deviations: &[f64],
    batch_size: usize,
) -> Result<AcceptanceCurve> {
    if deviations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("deviation grid must be strictly increasing".into()));
    }
    let mut instances = Vec::with_capacity(records.len() * deviations.len());
    for &x in deviations {
        instances.extend(records.iter().map(|r| decision_at(r, x)));
    }
    let preds = predict_all(predictor, &instances, batch_size)?;
    let m = records.len();
    let mean_prediction = if m == 0 {
        vec![f64::NAN; deviations.len()]
    } else {
        preds.chunks(m).map(|c| c.iter().sum::<f64>() / m as f64).collect()
    };
    Ok(AcceptanceCurve {
        size_class: size_class.to_string(),
        deviations: deviations.to_vec(),
        mean_prediction,
        counts: vec![m; deviations.len()],
    })
}

/// Constructive baselines compared against the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Heuristic {
    /// Nearest neighbor from city 0.
    NearestNeighbor,
    SimulatedAnnealing(SaParams),
}

impl Heuristic {
    pub fn name(&self) -> &'static str {
        match self {
            Heuristic::NearestNeighbor => "nearest_neighbor",
            Heuristic::SimulatedAnnealing(_) => "simulated_annealing",
        }
    }

    pub fn tour_cost(&self, instance: &TspInstance) -> Result<f64> {
        Ok(match self {
            Heuristic::NearestNeighbor => nearest_neighbor(instance, 0)?.cost,
            Heuristic::SimulatedAnnealing(p) => simulated_annealing(instance, p)?.cost,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TprTable {
    pub deviations: Vec<f64>,
    /// Fraction of instances at `(1 + dev)·C*` the model answers YES.
    pub model: Vec<f64>,
    /// Per heuristic, fraction of instances with tour cost `≤ (1 + dev)·C*`.
    pub heuristics: Vec<(String, Vec<f64>)>,
    /// Per heuristic, the tour costs behind the table.
    pub heuristic_costs: Vec<Vec<f64>>,
    pub count: usize,
}

impl TprTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("deviation\tmodel");
        for (name, _) in &self.heuristics {
            let _ = write!(out, "\t{name}");
        }
        out.push_str("\tcount\n");
        for (i, d) in self.deviations.iter().enumerate() {
            let _ = write!(out, "{d}\t{}", self.model[i]);
            for (_, v) in &self.heuristics {
                let _ = write!(out, "\t{}", v[i]);
            }
            let _ = writeln!(out, "\t{}", self.count);
        }
        out
    }
}

/// True-positive rates of the model against each heuristic's success
/// frequency. Without a predictor the model column is NaN.
pub fn baseline_tpr<P: Predictor + ?Sized>(
    predictor: Option<&P>,
    records: &[DatasetRecord],
    deviations: &[f64],
    heuristics: &[Heuristic],
    batch_size: usize,
) -> Result<TprTable> {
    let m = records.len().max(1) as f64;
    let model = match predictor {
        Some(p) => {
            let mut instances = Vec::with_capacity(records.len() * deviations.len());
            for &x in deviations {
                instances.extend(records.iter().map(|r| decision_at(r, x)));
            }
            let preds = predict_all(p, &instances, batch_size)?;
            preds
                .chunks(records.len().max(1))
                .map(|c| c.iter().filter(|&&q| q > 0.5).count() as f64 / m)
                .collect()
        }
        None => vec![f64::NAN; deviations.len()],
    };
    let mut table = Vec::new();
    let mut all_costs = Vec::new();
    for h in heuristics {
        let costs: Vec<f64> = records
            .par_iter()
            .map(|r| h.tour_cost(&r.instance))
            .collect::<Result<_>>()?;
        let freq = deviations
            .iter()
            .map(|&x| {
                let hits = costs
                    .iter()
                    .zip(records)
                    .filter(|(&c, r)| c <= (1.0 + x) * r.optimal_cost * (1.0 + 1e-12))
                    .count();
                hits as f64 / m
            })
            .collect();
        table.push((h.name().to_string(), freq));
        all_costs.push(costs);
    }
    Ok(TprTable {
        deviations: deviations.to_vec(),
        model,
        heuristics: table,
        heuristic_costs: all_costs,
        count: records.len(),
    })
}

/// How the binary search picks its first guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStart {
    /// Uniform in the initial bracket, from this seed.
    Random(u64),
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Prediction threshold separating YES from NO.
    pub p: f64,
    /// Relative half-width at which the search stops.
    pub delta: f64,
    pub max_iterations: usize,
    pub start: SearchStart,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            p: 0.5,
            delta: 0.01,
            max_iterations: 64,
            start: SearchStart::Random(0),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0 && self.delta > 0.0 && self.max_iterations > 0) {
            return Err(Error::InvalidArgument(format!("invalid search settings {self:?}")));
        }
        Ok(())
    }
}

/// Bracket and guess before one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStep {
    pub c_min: f64,
    pub c: f64,
    pub c_max: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSearch {
    /// Estimated optimal tour cost (the last evaluated guess).
    pub cost: f64,
    /// Number of predictions made.
    pub iterations: usize,
    /// True when the iteration cap stopped the search.
    pub capped: bool,
    pub trace: Vec<SearchStep>,
}

/// Sum of the `n` smallest and of the `n` largest edge weights.
pub fn cost_bracket(instance: &TspInstance) -> (f64, f64) {
    let n = instance.n();
    let mut w = instance.edge_weights();
    w.sort_by(f64::total_cmp);
    let lo = w[..n.min(w.len())].iter().sum();
    let hi = w[w.len().saturating_sub(n)..].iter().sum();
    (lo, hi)
}

struct SearchState {
    c_min: f64,
    c_max: f64,
    c: f64,
    trace: Vec<SearchStep>,
    done: Option<bool>,
}

impl SearchState {
    fn new(instance: &TspInstance, start: SearchStart) -> Self {
        let (c_min, c_max) = cost_bracket(instance);
        let c = match start {
            SearchStart::Midpoint => 0.5 * (c_min + c_max),
            SearchStart::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                if c_max > c_min {
                    rng.gen_range(c_min..=c_max)
                } else {
                    c_min
                }
            }
        };
        SearchState {
            c_min,
            c_max,
            c,
            trace: Vec::new(),
            done: None,
        }
    }

    /// Applies one prediction at the current guess.
    fn update(&mut self, prediction: f64, config: &SearchConfig) {
        self.trace.push(SearchStep {
            c_min: self.c_min,
            c: self.c,
            c_max: self.c_max,
            prediction,
        });
        if prediction < config.p {
            self.c_min = self.c;
        } else {
            self.c_max = self.c;
        }
        let c = self.c;
        if self.c_min >= c * (1.0 - config.delta) && self.c_max <= c * (1.0 + config.delta) {
            self.done = Some(false);
        } else if self.trace.len() >= config.max_iterations {
            self.done = Some(true);
        } else {
            self.c = 0.5 * (self.c_min + self.c_max);
        }
    }

    fn finish(self) -> CostSearch {
        CostSearch {
            cost: self.c,
            iterations: self.trace.len(),
            capped: self.done == Some(true),
            trace: self.trace,
        }
    }
}

/// Binary search for the optimal tour cost of `instance`, driven by the
/// predictor's answers. A prediction below `p` reads as "no tour that
/// cheap", raising the lower end of the bracket; anything else lowers the
/// upper end. Stops once both ends lie within `delta` of the last guess.
pub fn binary_search_cost<P: Predictor + ?Sized>(
    predictor: &P,
    instance: &TspInstance,
    config: &SearchConfig,
) -> Result<CostSearch> {
    let graph = std::sync::Arc::new(instance.clone());
    Ok(binary_search_many(predictor, &[graph], &[*config])?.remove(0))
}

/// Runs one search per instance in lockstep, batching the predictions of
/// all searches still running at each iteration.
pub fn binary_search_many<P: Predictor + ?Sized>(
    predictor: &P,
    instances: &[std::sync::Arc<TspInstance>],
    configs: &[SearchConfig],
) -> Result<Vec<CostSearch>> {
    if instances.len() != configs.len() {
        return Err(Error::InvalidArgument("one search config per instance".into()));
    }
    for c in configs {
        c.validate()?;
    }
    let mut states: Vec<SearchState> = instances
        .iter()
        .zip(configs)
        .map(|(g, c)| SearchState::new(g, c.start))
        .collect();
    loop {
        let active: Vec<usize> = (0..states.len()).filter(|&i| states[i].done.is_none()).collect();
        if active.is_empty() {
            break;
        }
        let batch: Vec<DecisionInstance> = active
            .iter()
            .map(|&i| DecisionInstance::new(std::sync::Arc::clone(&instances[i]), states[i].c, None))
            .collect();
        let preds = predict_all(predictor, &batch, 32)?;
        for (&i, &p) in active.iter().zip(&preds) {
            states[i].update(p, &configs[i]);
        }
    }
    Ok(states.into_iter().map(SearchState::finish).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{make_record, GroundTruth};

    fn records(count: u64, n: usize) -> Vec<DatasetRecord> {
        (0..count)
            .map(|i| make_record(GeneratorTag::Euclidean, n, 100 + i, GroundTruth::ExactOnly).unwrap())
            .collect()
    }

    #[test]
    fn oracle_is_perfect_and_constant_is_half() {
        let recs = records(10, 7);
        let a = eval_accuracy(&ThresholdOracle, &recs, 0.02, 4).unwrap();
        assert_eq!(a.accuracy, 1.0);
        assert_eq!(a.count, 20);
        let c = eval_accuracy(&ConstantPredictor(0.7), &recs, 0.02, 4).unwrap();
        assert_eq!(c.accuracy, 0.5);
    }

    #[test]
    fn oracle_curve_is_unit_step() {
        let recs = records(6, 7);
        let grid = symmetric_grid(0.3, 0.05).unwrap();
        assert_eq!(grid.len(), 13);
        assert_eq!(grid[6], 0.0);
        let curve = acceptance_curve(&ThresholdOracle, "7", &recs, &grid, 5).unwrap();
        for (d, m) in curve.deviations.iter().zip(&curve.mean_prediction) {
            assert_eq!(*m, if *d > 0.0 { 1.0 } else { 0.0 }, "at {d}");
        }
        let total: f64 = curve.differences().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(curve.max_decrease(), 0.0);
        assert!((curve.critical_point().unwrap() - 0.025).abs() < 1e-12);
    }

    #[test]
    fn heuristic_frequencies_saturate() {
        let recs = records(8, 8);
        let sa = SaParams {
            seed: 3,
            ..SaParams::default()
        };
        let heur = [Heuristic::NearestNeighbor, Heuristic::SimulatedAnnealing(sa)];
        let t = baseline_tpr(Some(&ThresholdOracle), &recs, &[0.0, 0.05, 10.0], &heur, 4).unwrap();
        assert_eq!(t.model, vec![0.0, 1.0, 1.0]);
        for (_, f) in &t.heuristics {
            assert_eq!(f[2], 1.0);
            assert!(f.windows(2).all(|w| w[0] <= w[1]));
        }
        assert!(t.to_tsv().starts_with("deviation\tmodel\tnearest_neighbor\tsimulated_annealing\tcount\n"));
    }

    #[test]
    fn oracle_search_brackets_the_optimum() {
        for r in records(10, 9) {
            let opt = r.optimal_cost;
            for start in [SearchStart::Midpoint, SearchStart::Random(r.seed)] {
                let config = SearchConfig {
                    start,
                    ..SearchConfig::default()
                };
                let s = binary_search_cost(&ThresholdOracle, &r.instance, &config).unwrap();
                assert!(!s.capped);
                assert!((s.cost - opt).abs() / opt <= 0.02);
                let mut width = f64::INFINITY;
                for step in &s.trace {
                    assert!(step.c_min <= opt && opt <= step.c_max);
                    assert!(step.c_min <= step.c && step.c <= step.c_max);
                    assert!(step.c_max - step.c_min <= width);
                    width = step.c_max - step.c_min;
                }
            }
        }
    }

    #[test]
    fn constant_yes_drifts_to_lower_bracket() {
        let r = &records(1, 8)[0];
        let (lo, _) = cost_bracket(&r.instance);
        let config = SearchConfig {
            start: SearchStart::Midpoint,
            ..SearchConfig::default()
        };
        let s = binary_search_cost(&ConstantPredictor(0.9), &r.instance, &config).unwrap();
        assert!(!s.capped);
        assert!(s.cost >= lo && s.cost <= lo * 1.03, "{} vs {lo}", s.cost);
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let r = &records(1, 8)[0];
        let config = SearchConfig {
            max_iterations: 2,
            start: SearchStart::Midpoint,
            ..SearchConfig::default()
        };
        let s = binary_search_cost(&ThresholdOracle, &r.instance, &config).unwrap();
        assert!(s.capped);
        assert_eq!(s.iterations, 2);
    }
}
