//! Supervised training on dual decision pairs.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamConfig, AdamState};
use crate::checkpoint::{save_checkpoint, Checkpoint, CheckpointMeta};
use crate::error::{Error, Result};
use crate::generate::{decision_at, make_dual_pair, record_seed, DatasetRecord};
use crate::graph::DecisionInstance;
use crate::model::{loss_and_gradients, ModelConfig, ModelParams};

/// Deviations used by the large-deviation fine-tune.
pub const FINE_TUNE_DEVIATIONS: [f64; 5] = [-0.02, 0.02, 1.0, 2.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    /// Graphs per batch; each contributes its YES and its NO instance.
    pub pairs_per_batch: usize,
    /// Relative deviation `x` of the dual targets `(1 ± x)·C*`.
    pub deviation: f64,
    pub model: ModelConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables periodic ones).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batches_per_epoch: 128,
            pairs_per_batch: 16,
            deviation: 0.02,
            model: ModelConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batches_per_epoch == 0 || self.pairs_per_batch == 0 {
            return Err(Error::InvalidArgument(
                "batches_per_epoch and pairs_per_batch must be positive".into(),
            ));
        }
        if !(self.deviation > 0.0 && self.deviation < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "deviation must lie in (0, 1), got {}",
                self.deviation
            )));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.eps > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(Error::InvalidArgument(format!("invalid optimizer settings {a:?}")));
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// One-based index of the epoch.
    pub epoch: usize,
    /// Mean binary cross entropy over the epoch's batches.
    pub loss: f64,
    /// Fraction of predictions on the correct side of 0.5.
    pub accuracy: f64,
    pub seconds: f64,
}

impl EpochMetrics {
    /// One metrics-log line: `epoch loss accuracy seconds`, tab separated.
    pub fn log_line(&self) -> String {
        format!("{}\t{}\t{}\t{:.3}", self.epoch, self.loss, self.accuracy, self.seconds)
    }
}

pub const METRICS_HEADER: &str = "epoch\tloss\taccuracy\tseconds";

/// Random source for epoch `epoch` (one-based) of a run seeded with `seed`,
/// so a resumed run samples exactly what an uninterrupted one would.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(record_seed(seed ^ 0x7472_6169_6e00_0000, epoch as u64))
}

fn correct(prediction: f64, label: Option<bool>) -> bool {
    match label {
        Some(true) => prediction > 0.5,
        Some(false) => prediction < 0.5,
        None => false,
    }
}

/// Runs one Adam step per batch; each batch is built by `make_batch`.
fn run_batches<R, F>(
    params: &mut ModelParams<f64>,
    adam: &mut AdamState<f64>,
    batches: usize,
    rng: &mut R,
    mut make_batch: F,
) -> Result<(f64, f64)>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<Vec<DecisionInstance>>,
{
    let mut loss_sum = 0.0;
    let mut hits = 0usize;
    let mut total = 0usize;
    for _ in 0..batches {
        let batch = make_batch(rng)?;
        let (loss, predictions) = loss_and_gradients(&batch, params)?;
        adam.step(params.store_mut());
        loss_sum += loss;
        hits += predictions
            .iter()
            .zip(&batch)
            .filter(|(&p, inst)| correct(p, inst.label))
            .count();
        total += batch.len();
    }
    Ok((loss_sum / batches as f64, hits as f64 / total.max(1) as f64))
}

fn check_dataset(dataset: &[DatasetRecord], pairs_per_batch: usize) -> Result<()> {
    if dataset.len() < pairs_per_batch {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} graphs, fewer than one batch of {pairs_per_batch}",
            dataset.len()
        )));
    }
    if let Some(bad) = dataset.iter().find(|r| !r.exact) {
        return Err(Error::InvalidArgument(format!(
            "training needs exact optimal costs, record with seed {} is approximate",
            bad.seed
        )));
    }
    Ok(())
}

/// One training epoch. Graphs are sampled with replacement; every sampled
/// graph contributes both members of its dual pair to the same batch.
pub fn train_epoch<R: Rng + ?Sized>(
    params: &mut ModelParams<f64>,
    adam: &mut AdamState<f64>,
    dataset: &[DatasetRecord],
    config: &TrainConfig,
    epoch: usize,
    rng: &mut R,
) -> Result<EpochMetrics> {
    check_dataset(dataset, config.pairs_per_batch)?;
    let start = Instant::now();
    let (loss, accuracy) = run_batches(params, adam, config.batches_per_epoch, rng, |rng| {
        let mut batch = Vec::with_capacity(2 * config.pairs_per_batch);
        for _ in 0..config.pairs_per_batch {
            let record = &dataset[rng.gen_range(0..dataset.len())];
            let pair = make_dual_pair(record, config.deviation)?;
            batch.push(pair.positive);
            batch.push(pair.negative);
        }
        Ok(batch)
    })?;
    Ok(EpochMetrics {
        epoch,
        loss,
        accuracy,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// A single extra epoch where every sampled graph appears once at each of
/// `deviations`, labeled YES for positive and NO for negative deviations.
pub fn fine_tune_large_deviations<R: Rng + ?Sized>(
    params: &mut ModelParams<f64>,
    adam: &mut AdamState<f64>,
    dataset: &[DatasetRecord],
    config: &TrainConfig,
    deviations: &[f64],
    rng: &mut R,
) -> Result<EpochMetrics> {
    check_dataset(dataset, config.pairs_per_batch)?;
    if deviations.is_empty() || deviations.iter().any(|&x| x == 0.0 || !x.is_finite() || x <= -1.0) {
        return Err(Error::InvalidArgument(format!(
            "fine-tune deviations must be nonzero and greater than -1, got {deviations:?}"
        )));
    }
    let start = Instant::now();
    let (loss, accuracy) = run_batches(params, adam, config.batches_per_epoch, rng, |rng| {
        let mut batch = Vec::with_capacity(deviations.len() * config.pairs_per_batch);
        for _ in 0..config.pairs_per_batch {
            let record = &dataset[rng.gen_range(0..dataset.len())];
            batch.extend(deviations.iter().map(|&x| decision_at(record, x)));
        }
        Ok(batch)
    })?;
    Ok(EpochMetrics {
        epoch: 1,
        loss,
        accuracy,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Where `train` writes its artifacts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainOutput {
    pub dir: PathBuf,
}

impl TrainOutput {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TrainOutput { dir: dir.into() }
    }

    pub fn metrics_log(&self) -> PathBuf {
        self.dir.join("metrics.tsv")
    }

    pub fn final_checkpoint(&self) -> PathBuf {
        self.dir.join("final.ckpt")
    }

    pub fn epoch_checkpoint(&self, epoch: usize) -> PathBuf {
        self.dir.join(format!("epoch-{epoch:04}.ckpt"))
    }
}

/// Full result of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

fn initial_state(config: &TrainConfig, resume: Option<Checkpoint>) -> Result<Checkpoint> {
    match resume {
        Some(mut ckpt) => {
            ckpt.require_config(&config.model)?;
            let adam = ckpt
                .adam
                .take()
                .unwrap_or_else(|| AdamState::new(config.adam, ckpt.params.store()));
            // Learning-rate settings come from the config, moments from the file.
            ckpt.adam = Some(AdamState {
                config: config.adam,
                ..adam
            });
            Ok(ckpt)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let params = ModelParams::init(config.model.clone(), &mut rng)?;
            let adam = AdamState::new(config.adam, params.store());
            Ok(Checkpoint {
                params,
                meta: CheckpointMeta {
                    epoch: 0,
                    seed: config.seed,
                    loss: None,
                    accuracy: None,
                },
                adam: Some(adam),
            })
        }
    }
}

/// Trains for `config.epochs` further epochs, appending to the metrics log
/// and writing periodic and final checkpoints into `output`. With `resume`
/// the epoch numbering and optimizer state continue from the checkpoint.
pub fn train(
    config: &TrainConfig,
    dataset: &[DatasetRecord],
    output: &TrainOutput,
    resume: Option<Checkpoint>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainResult> {
    config.validate()?;
    if config.epochs > 0 {
        check_dataset(dataset, config.pairs_per_batch)?;
    }
    let resuming = resume.is_some();
    let mut state = initial_state(config, resume)?;
    fs::create_dir_all(&output.dir).map_err(|e| Error::io(&output.dir, e))?;
    let log_path = output.metrics_log();
    let mut log = open_log(&log_path, resuming)?;
    let mut adam = state.adam.take().expect("initial state carries optimizer");
    let mut metrics = Vec::with_capacity(config.epochs);
    let first = state.meta.epoch + 1;
    for epoch in first..first + config.epochs {
        let mut rng = epoch_rng(state.meta.seed, epoch);
        let m = train_epoch(&mut state.params, &mut adam, dataset, config, epoch, &mut rng)?;
        writeln!(log, "{}", m.log_line()).map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        state.meta.epoch = epoch;
        state.meta.loss = Some(m.loss);
        state.meta.accuracy = Some(m.accuracy);
        on_epoch(&m);
        metrics.push(m);
        if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
            let snapshot = Checkpoint {
                params: state.params.clone(),
                meta: state.meta.clone(),
                adam: Some(adam.clone()),
            };
            save_checkpoint(&snapshot, output.epoch_checkpoint(epoch))?;
        }
    }
    state.adam = Some(adam);
    save_checkpoint(&state, output.final_checkpoint())?;
    Ok(TrainResult {
        checkpoint: state,
        metrics,
    })
}

fn open_log(path: &Path, append: bool) -> Result<fs::File> {
    let exists = path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if !append || !exists {
        writeln!(file, "{METRICS_HEADER}").map_err(|e| Error::io(path, e))?;
    }
    Ok(file)
}

/// Formats metrics as a log (header plus one line per epoch).
pub fn format_metrics(metrics: &[EpochMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for m in metrics {
        let _ = writeln!(out, "{}", m.log_line());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{make_record, GeneratorTag, GroundTruth};

    fn dataset(count: u64) -> Vec<DatasetRecord> {
        (0..count)
            .map(|i| make_record(GeneratorTag::Euclidean, 5 + (i % 3) as usize, i, GroundTruth::ExactOnly).unwrap())
            .collect()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batches_per_epoch: 3,
            pairs_per_batch: 2,
            deviation: 0.1,
            model: ModelConfig::small(4, 2),
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            seed: 5,
            checkpoint_every: 1,
        }
    }

    #[test]
    fn zero_parameters_start_at_ln2() {
        let data = dataset(4);
        let mut params = ModelParams::<f64>::zeros(ModelConfig::small(4, 2)).unwrap();
        let pair = make_dual_pair(&data[0], 0.1).unwrap();
        let batch = vec![pair.positive, pair.negative];
        let (loss, preds) = loss_and_gradients(&batch, &mut params).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-9);
        assert!(preds.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn epoch_is_deterministic_and_balanced() {
        let data = dataset(6);
        let config = tiny_config();
        let run = || {
            let mut p = ModelParams::init(config.model.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let mut adam = AdamState::new(config.adam, p.store());
            let m = train_epoch(&mut p, &mut adam, &data, &config, 1, &mut epoch_rng(9, 1)).unwrap();
            (m.loss.to_bits(), m.accuracy.to_bits(), p)
        };
        let (l1, a1, p1) = run();
        let (l2, a2, p2) = run();
        assert_eq!((l1, a1), (l2, a2));
        assert_eq!(p1, p2);
    }

    #[test]
    fn small_dataset_is_rejected() {
        let data = dataset(1);
        let config = tiny_config();
        let mut p = ModelParams::zeros(config.model.clone()).unwrap();
        let mut adam = AdamState::new(config.adam, p.store());
        assert!(train_epoch(&mut p, &mut adam, &data, &config, 1, &mut epoch_rng(0, 1)).is_err());
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut c = tiny_config();
        c.deviation = 1.5;
        assert!(c.validate().is_err());
        c = tiny_config();
        c.pairs_per_batch = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn fine_tune_with_dual_deviations_matches_standard_epoch() {
        let data = dataset(6);
        let config = tiny_config();
        let start = ModelParams::init(config.model.clone(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();

        let mut a = start.clone();
        let mut adam_a = AdamState::new(config.adam, a.store());
        let ma = train_epoch(&mut a, &mut adam_a, &data, &config, 1, &mut epoch_rng(3, 1)).unwrap();

        let mut b = start;
        let mut adam_b = AdamState::new(config.adam, b.store());
        let mb = fine_tune_large_deviations(&mut b, &mut adam_b, &data, &config, &[0.1, -0.1], &mut epoch_rng(3, 1))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(ma.loss, mb.loss);
        assert_eq!(ma.accuracy, mb.accuracy);
    }
}
