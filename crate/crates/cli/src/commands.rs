use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use tspgnn::autodiff::{AdamConfig, AdamState};
use tspgnn::checkpoint::{load_checkpoint, save_checkpoint};
use tspgnn::dataset::{load_dataset, save_dataset};
use rayon::prelude::*;
use tspgnn::evaluation::{
    acceptance_curve, accuracy_sweep, baseline_tpr, binary_search_many, curves_to_tsv, distribution_eval,
    size_sweep, symmetric_grid, Heuristic, Predictor, SearchConfig, SearchStart, ThresholdOracle,
};
use tspgnn::generate::{generate_dataset, record_seed, DatasetRecord, DatasetSpec, GeneratorTag, GroundTruth};
use tspgnn::oracles::{calibrate_sa, simulated_annealing, SaParams};
use tspgnn::train::{self, fine_tune_large_deviations, TrainConfig, TrainOutput};
use tspgnn::tsplib::{self, GeoMode};
use tspgnn::{DecisionInstance, ModelParams, TspInstance};

use crate::config::{RunConfig, SampleSection};
use crate::CliError;

fn output_dir(config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes the resolved config (with the tool version) next to the outputs.
fn write_resolved(dir: &Path, config: &RunConfig, command: &str) -> Result<(), CliError> {
    write_file(&dir.join(format!("{command}.resolved.toml")), &config.render(command))
}

fn parse_tag(s: &str) -> Result<GeneratorTag, CliError> {
    s.parse().map_err(CliError::from)
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    distribution: Option<String>,
    #[arg(long)]
    min_n: Option<usize>,
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Allow annealing estimates above the exact-solver limit.
    #[arg(long)]
    allow_approximate: bool,
}

pub fn generate(mut config: RunConfig, args: GenerateArgs) -> Result<(), CliError> {
    let g = &mut config.generate;
    if let Some(v) = args.distribution {
        g.distribution = v;
    }
    if let Some(v) = args.min_n {
        g.min_n = v;
    }
    if let Some(v) = args.max_n {
        g.max_n = v;
    }
    if let Some(v) = args.count {
        g.count = v;
    }
    if let Some(v) = args.seed {
        g.seed = v;
    }
    g.allow_approximate |= args.allow_approximate;
    let g = config.generate.clone();
    let spec = DatasetSpec {
        tag: parse_tag(&g.distribution)?,
        min_n: g.min_n,
        max_n: g.max_n,
        count: g.count,
        seed: g.seed,
        truth: if g.allow_approximate {
            GroundTruth::AllowApproximate
        } else {
            GroundTruth::ExactOnly
        },
    };
    let records = generate_dataset(&spec).map_err(|e| match e {
        tspgnn::Error::Capacity { .. } => CliError::Data(format!("{e}; pass --allow-approximate for larger graphs")),
        other => other.into(),
    })?;
    let dir = output_dir(&config)?;
    write_resolved(&dir, &config, "generate")?;
    save_dataset(&records, dir.join(&g.file))?;
    let mut manifest = String::from("index\tseed\tn\texact\toptimal_cost\n");
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(manifest, "{i}\t{}\t{}\t{}\t{}", r.seed, r.instance.n(), r.exact, r.optimal_cost);
    }
    write_file(&dir.join(format!("{}.manifest.tsv", g.file)), &manifest)?;
    eprintln!("wrote {} records to {}", records.len(), dir.join(&g.file).display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batches_per_epoch: Option<usize>,
    #[arg(long)]
    pairs_per_batch: Option<usize>,
    #[arg(long)]
    deviation: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Run the large-deviation fine-tune epoch after training.
    #[arg(long)]
    fine_tune: bool,
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("dataset {} does not exist", path.display())));
    }
    Ok(load_dataset(path)?)
}

pub fn train(mut config: RunConfig, args: TrainArgs) -> Result<(), CliError> {
    let t = &mut config.train;
    if let Some(v) = args.dataset {
        t.dataset = Some(v);
    }
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.batches_per_epoch {
        t.batches_per_epoch = v;
    }
    if let Some(v) = args.pairs_per_batch {
        t.pairs_per_batch = v;
    }
    if let Some(v) = args.deviation {
        t.deviation = v;
    }
    if let Some(v) = args.lr {
        t.lr = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    if let Some(v) = args.checkpoint_every {
        t.checkpoint_every = v;
    }
    if let Some(v) = args.resume {
        t.resume = Some(v);
    }
    t.fine_tune |= args.fine_tune;
    let t = config.train.clone();
    let train_config = TrainConfig {
        epochs: t.epochs,
        batches_per_epoch: t.batches_per_epoch,
        pairs_per_batch: t.pairs_per_batch,
        deviation: t.deviation,
        model: config.model.to_config(),
        adam: AdamConfig {
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
        },
        seed: t.seed,
        checkpoint_every: t.checkpoint_every,
    };
    train_config.validate()?;
    let dataset_path = t.dataset.clone().ok_or_else(|| usage("train needs a dataset (--dataset or train.dataset)"))?;
    let records = load_records(&dataset_path)?;
    let resume = t.resume.as_deref().map(load_checkpoint).transpose()?;
    let dir = output_dir(&config)?;
    write_resolved(&dir, &config, "train")?;
    let output = TrainOutput::new(&dir);
    let result = train::train(&train_config, &records, &output, resume, |m| {
        eprintln!(
            "epoch {:>4}  loss {:.5}  accuracy {:.4}  {:.1}s",
            m.epoch, m.loss, m.accuracy, m.seconds
        );
    })?;
    if t.fine_tune {
        let mut ckpt = result.checkpoint;
        let mut adam = ckpt
            .adam
            .take()
            .unwrap_or_else(|| AdamState::new(train_config.adam, ckpt.params.store()));
        let mut rng = train::epoch_rng(t.seed ^ 0x66_696e_6500, ckpt.meta.epoch + 1);
        let m = fine_tune_large_deviations(
            &mut ckpt.params,
            &mut adam,
            &records,
            &train_config,
            &t.fine_tune_deviations,
            &mut rng,
        )?;
        eprintln!("fine-tune  loss {:.5}  accuracy {:.4}  {:.1}s", m.loss, m.accuracy, m.seconds);
        ckpt.adam = Some(adam);
        ckpt.meta.loss = Some(m.loss);
        ckpt.meta.accuracy = Some(m.accuracy);
        save_checkpoint(&ckpt, dir.join("fine-tuned.ckpt"))?;
        write_file(&dir.join("fine-tune.tsv"), &train::format_metrics(&[m]))?;
    }
    Ok(())
}

/// The model, or the exact threshold oracle standing in for it.
enum Model {
    Oracle,
    Params(Box<ModelParams>),
}

impl Predictor for Model {
    fn predict(&self, batch: &[DecisionInstance]) -> tspgnn::Result<Vec<f64>> {
        match self {
            Model::Oracle => ThresholdOracle.predict(batch),
            Model::Params(p) => p.predict(batch),
        }
    }
}

fn load_model(checkpoint: Option<&Path>, oracle: bool) -> Result<Model, CliError> {
    if oracle {
        return Ok(Model::Oracle);
    }
    let path = checkpoint.ok_or_else(|| usage("a checkpoint is required (--checkpoint, or --oracle where supported)"))?;
    Ok(Model::Params(Box::new(load_checkpoint(path)?.params)))
}

/// Records from the sample's dataset file, or freshly generated ones.
/// Sizes above the exact-solver limit get approximate ground truth.
fn sample_records(s: &SampleSection) -> Result<Vec<DatasetRecord>, CliError> {
    match &s.dataset {
        Some(path) => load_records(path),
        None => Ok(generate_dataset(&DatasetSpec {
            tag: parse_tag(&s.distribution)?,
            min_n: s.min_n,
            max_n: s.max_n,
            count: s.count,
            seed: s.seed,
            truth: GroundTruth::AllowApproximate,
        })?),
    }
}

/// Fresh records of exactly `n` cities; the seed is offset by `n` so
/// each class gets its own graphs.
fn sized_records(s: &SampleSection, tag: GeneratorTag, n: usize) -> Result<Vec<DatasetRecord>, CliError> {
    Ok(generate_dataset(&DatasetSpec {
        tag,
        min_n: n,
        max_n: n,
        count: s.count,
        seed: s.seed.wrapping_add(n as u64),
        truth: GroundTruth::AllowApproximate,
    })?)
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Evaluate on this dataset instead of freshly generated graphs.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Number of fresh graphs (per size class or distribution where applicable).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_n: Option<usize>,
    #[arg(long)]
    max_n: Option<usize>,
}

impl SampleArgs {
    fn apply(self, s: &mut SampleSection) {
        if let Some(v) = self.dataset {
            s.dataset = Some(v);
        }
        if let Some(v) = self.count {
            s.count = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.min_n {
            s.min_n = v;
        }
        if let Some(v) = self.max_n {
            s.max_n = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// `accuracy`, `sizes` or `distributions`.
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    samples: SampleArgs,
}

pub fn eval(mut config: RunConfig, args: EvalArgs) -> Result<(), CliError> {
    let e = &mut config.eval;
    if let Some(v) = args.checkpoint {
        e.checkpoint = Some(v);
    }
    if let Some(v) = args.mode {
        e.mode = v;
    }
    args.samples.apply(&mut e.samples);
    let e = config.eval.clone();
    if e.deviations.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(usage("eval deviations must lie in (0, 1)"));
    }
    let model = load_model(e.checkpoint.as_deref(), false)?;
    let s = &e.samples;
    let table = match e.mode.as_str() {
        "accuracy" => {
            let records = sample_records(s)?;
            let label = match &s.dataset {
                Some(p) => p.display().to_string(),
                None => format!("{}:{}-{}", s.distribution, s.min_n, s.max_n),
            };
            accuracy_sweep(&model, "sample", &[(label, records)], &e.deviations, e.batch_size)?
        }
        "sizes" => {
            let tag = parse_tag(&s.distribution)?;
            let groups = e
                .sizes
                .iter()
                .map(|&n| Ok((n, sized_records(s, tag, n)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            size_sweep(&model, &groups, &e.deviations, e.batch_size)?
        }
        "distributions" => {
            let groups = e
                .distributions
                .iter()
                .map(|name| {
                    let tag = parse_tag(name)?;
                    let spec = SampleSection {
                        distribution: name.clone(),
                        dataset: None,
                        ..s.clone()
                    };
                    Ok((tag, sample_records(&spec)?))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            distribution_eval(&model, &groups, &e.deviations, e.batch_size)?
        }
        other => return Err(usage(format!("eval mode must be accuracy, sizes or distributions, got `{other}`"))),
    };
    let dir = output_dir(&config)?;
    write_resolved(&dir, &config, "eval")?;
    let path = dir.join(format!("eval-{}-seed{}.tsv", e.mode, s.seed));
    write_file(&path, &table.to_tsv())?;
    print!("{}", table.to_tsv());
    Ok(())
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Use the exact threshold predictor instead of a model.
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    samples: SampleArgs,
}

pub fn curve(mut config: RunConfig, args: CurveArgs) -> Result<(), CliError> {
    let c = &mut config.curve;
    if let Some(v) = args.checkpoint {
        c.checkpoint = Some(v);
    }
    c.oracle |= args.oracle;
    args.samples.apply(&mut c.samples);
    let c = config.curve.clone();
    let model = load_model(c.checkpoint.as_deref(), c.oracle)?;
    let grid = symmetric_grid(c.grid_max, c.grid_step)?;
    let tag = parse_tag(&c.samples.distribution)?;
    let mut curves = Vec::new();
    for &n in &c.sizes {
        let records = sized_records(&c.samples, tag, n)?;
        curves.push(acceptance_curve(&model, &n.to_string(), &records, &grid, c.batch_size)?);
    }
    let mut summary = String::from("size\tcritical_point\tmean_at_zero\tmax_decrease\tcount\n");
    for cv in &curves {
        let zero = cv.deviations.iter().position(|&d| d == 0.0).map(|i| cv.mean_prediction[i]);
        let _ = writeln!(
            summary,
            "{}\t{}\t{}\t{}\t{}",
            cv.size_class,
            cv.critical_point().map(|x| x.to_string()).unwrap_or_default(),
            zero.map(|x| x.to_string()).unwrap_or_default(),
            cv.max_decrease(),
            cv.counts.first().copied().unwrap_or(0)
        );
    }
    let dir = output_dir(&config)?;
    write_resolved(&dir, &config, "curve")?;
    let mode = if c.oracle { "oracle" } else { "model" };
    let table = curves_to_tsv(&curves);
    write_file(&dir.join(format!("curve-{mode}-seed{}.tsv", c.samples.seed)), &table)?;
    write_file(&dir.join(format!("curve-{mode}-summary-seed{}.tsv", c.samples.seed)), &summary)?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    oracle: bool,
    /// TSPLIB file or bundled instance name (`ulysses16`, `berlin52`); repeatable.
    #[arg(long)]
    tsplib: Vec<String>,
    /// `haversine` or `tsplib` distances for GEO instances.
    #[arg(long)]
    geo: Option<String>,
    /// Start every search at the bracket midpoint.
    #[arg(long)]
    midpoint: bool,
    #[arg(long)]
    delta: Option<f64>,
    #[command(flatten)]
    samples: SampleArgs,
}

/// One row of the cost report.
struct CostTarget {
    name: String,
    graph: Arc<TspInstance>,
    /// Multiplies normalized costs back to raw units.
    scale: f64,
    optimum: Option<f64>,
}

fn tsplib_target(spec: &str, geo: GeoMode) -> Result<CostTarget, CliError> {
    let (inst, optimum) = match tsplib::bundled(spec) {
        Some(b) => {
            let inst = tsplib::parse_tsplib(b.problem, geo)?;
            let tour = tsplib::parse_tour(b.optimal_tour)?;
            // Optimum under the distance convention actually in use.
            let optimum = inst.tour_cost(&tour)?;
            (inst, Some(optimum))
        }
        None => (tsplib::load_tsplib(spec, geo)?, None),
    };
    let name = if inst.name.is_empty() { spec.to_string() } else { inst.name.clone() };
    let mut graph = inst.normalized.clone();
    graph.optimal_cost = optimum.map(|c| c / inst.scale);
    Ok(CostTarget {
        name,
        graph: Arc::new(graph),
        scale: inst.scale,
        optimum,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn cost(mut config: RunConfig, args: CostArgs) -> Result<(), CliError> {
    let c = &mut config.cost;
    if let Some(v) = args.checkpoint {
        c.checkpoint = Some(v);
    }
    c.oracle |= args.oracle;
    if !args.tsplib.is_empty() {
        c.tsplib = args.tsplib;
    }
    if let Some(v) = args.geo {
        c.geo = v;
    }
    c.midpoint |= args.midpoint;
    if let Some(v) = args.delta {
        c.delta = v;
    }
    args.samples.apply(&mut c.samples);
    let c = config.cost.clone();
    let model = load_model(c.checkpoint.as_deref(), c.oracle)?;
    let geo: GeoMode = c.geo.parse()?;
    let targets: Vec<CostTarget> = if c.tsplib.is_empty() {
        sample_records(&c.samples)?
            .into_iter()
            .enumerate()
            .map(|(i, r)| CostTarget {
                name: format!("{}-{i}", r.tag),
                graph: Arc::clone(&r.instance),
                scale: 1.0,
                optimum: Some(r.optimal_cost),
            })
            .collect()
    } else {
        c.tsplib.iter().map(|s| tsplib_target(s, geo)).collect::<Result<_, _>>()?
    };
    let configs: Vec<SearchConfig> = (0..targets.len())
        .map(|i| SearchConfig {
            p: c.p,
            delta: c.delta,
            start: if c.midpoint {
                SearchStart::Midpoint
            } else {
                SearchStart::Random(record_seed(c.samples.seed, i as u64))
            },
            ..SearchConfig::default()
        })
        .collect();
    let graphs: Vec<Arc<TspInstance>> = targets.iter().map(|t| Arc::clone(&t.graph)).collect();
    let searches = binary_search_many(&model, &graphs, &configs)?;
    let sa_costs: Vec<Option<f64>> = if c.sa {
        targets
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                let params = SaParams {
                    seed: record_seed(c.samples.seed ^ 0x5A, i as u64),
                    ..SaParams::default()
                };
                Ok(Some(simulated_annealing(&t.graph, &params)?.cost * t.scale))
            })
            .collect::<tspgnn::Result<_>>()?
    } else {
        vec![None; targets.len()]
    };

    let pct = |est: f64, opt: Option<f64>| opt.map(|o| 100.0 * (est - o) / o);
    let mut table = String::from(
        "instance\tn\toptimum\tgnn_cost\tgnn_deviation_pct\titerations\tcapped\tsa_cost\tsa_deviation_pct\n",
    );
    let mut abs_dev = Vec::new();
    let mut iterations = 0usize;
    for ((t, s), sa) in targets.iter().zip(&searches).zip(&sa_costs) {
        let est = s.cost * t.scale;
        let dev = pct(est, t.optimum);
        if let Some(d) = dev {
            abs_dev.push(d.abs());
        }
        iterations += s.iterations;
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{est}\t{}\t{}\t{}\t{}\t{}",
            t.name,
            t.graph.n(),
            fmt_opt(t.optimum),
            fmt_opt(dev),
            s.iterations,
            s.capped,
            fmt_opt(*sa),
            fmt_opt(sa.and_then(|v| pct(v, t.optimum))),
        );
    }
    let n = targets.len().max(1) as f64;
    let mean_abs = if abs_dev.is_empty() {
        None
    } else {
        Some(abs_dev.iter().sum::<f64>() / abs_dev.len() as f64)
    };
    let summary = format!(
        "instances\tmean_abs_deviation_pct\tmean_iterations\tcapped\n{}\t{}\t{}\t{}\n",
        targets.len(),
        fmt_opt(mean_abs),
        iterations as f64 / n,
        searches.iter().filter(|s| s.capped).count()
    );
    let dir = output_dir(&config)?;
    write_resolved(&dir, &config, "cost")?;
    let source = if c.tsplib.is_empty() { "sample" } else { "tsplib" };
    let mode = if c.oracle { "oracle" } else { "model" };
    write_file(&dir.join(format!("cost-{source}-{mode}-seed{}.tsv", c.samples.seed)), &table)?;
    write_file(&dir.join(format!("cost-{source}-{mode}-summary-seed{}.tsv", c.samples.seed)), &summary)?;
    print!("{table}{summary}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Model to compare against; without it only the heuristics are reported.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    calibration_budget: Option<usize>,
    #[command(flatten)]
    samples: SampleArgs,
}

pub fn baseline(mut config: RunConfig, args: BaselineArgs) -> Result<(), CliError> {
    let b = &mut config.baseline;
    if let Some(v) = args.checkpoint {
        b.checkpoint = Some(v);
    }
    if let Some(v) = args.calibration_budget {
        b.calibration_budget = v;
    }
    args.samples.apply(&mut b.samples);
    let b = config.baseline.clone();
    let model = b.checkpoint.as_deref().map(|p| load_model(Some(p), false)).transpose()?;
    let records = sample_records(&b.samples)?;
    if records.iter().any(|r| !r.exact) {
        return Err(CliError::Data("baseline needs exact optima; keep max_n within the exact-solver limit".into()));
    }
    let calibration = generate_dataset(&DatasetSpec {
        tag: parse_tag(&b.samples.distribution)?,
        min_n: b.samples.min_n,
        max_n: b.samples.max_n,
        count: b.calibration_count,
        seed: b.samples.seed ^ 0xCA11_B8A7E,
        truth: GroundTruth::ExactOnly,
    })?;
    let calibration: Vec<TspInstance> = calibration.iter().map(|r| (*r.instance).clone()).collect();
    let run_seed = b.samples.seed;
    let tuned = if calibration.is_empty() {
        SaParams::default()
    } else {
        calibrate_sa(&calibration, b.calibration_budget, run_seed)?
    };
    let untuned = SaParams {
        seed: tuned.seed,
        ..SaParams::default()
    };
    let heuristics = [Heuristic::NearestNeighbor, Heuristic::SimulatedAnnealing(tuned)];
    let tpr = baseline_tpr(model.as_ref(), &records, &b.deviations, &heuristics, b.batch_size)?;
    let untuned_costs: Vec<f64> = records
        .par_iter()
        .map(|r| Heuristic::SimulatedAnnealing(untuned).tour_cost(&r.instance))
        .collect::<tspgnn::Result<_>>()?;

    let (nn, sa) = (&tpr.heuristic_costs[0], &tpr.heuristic_costs[1]);
    let excess = |costs: &[f64]| {
        costs.iter().zip(&records).map(|(c, r)| (c - r.optimal_cost) / r.optimal_cost).sum::<f64>()
            / records.len().max(1) as f64
    };
    let mut per_instance = String::from("index\tn\toptimum\tnearest_neighbor\tsimulated_annealing\tsa_default\n");
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            per_instance,
            "{i}\t{}\t{}\t{}\t{}\t{}",
            r.instance.n(),
            r.optimal_cost,
            nn[i],
            sa[i],
            untuned_costs[i]
        );
    }
    let sa_le_nn = sa.iter().zip(nn).filter(|(s, n)| s <= n).count() as f64 / records.len().max(1) as f64;
    let summary = format!(
        "method\tmean_excess\n\
         nearest_neighbor\t{}\n\
         simulated_annealing\t{}\n\
         sa_default\t{}\n\
         sa_le_nn_fraction\t{sa_le_nn}\n\
         sa_t0\t{}\nsa_alpha\t{}\nsa_t_min\t{}\n",
        excess(nn),
        excess(sa),
        excess(&untuned_costs),
        tuned.t0,
        tuned.alpha,
        tuned.t_min
    );
    let dir = output_dir(&config)?;
    write_resolved(&dir, &config, "baseline")?;
    let seed = b.samples.seed;
    write_file(&dir.join(format!("baseline-tpr-seed{seed}.tsv")), &tpr.to_tsv())?;
    write_file(&dir.join(format!("baseline-instances-seed{seed}.tsv")), &per_instance)?;
    write_file(&dir.join(format!("baseline-summary-seed{seed}.tsv")), &summary)?;
    print!("{}{summary}", tpr.to_tsv());
    Ok(())
}
