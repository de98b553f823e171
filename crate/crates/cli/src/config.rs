//! Run configuration: a TOML file with one table per subcommand.
//!
//! Precedence, highest first: command-line flags, the config file, the
//! built-in defaults below. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tspgnn::autodiff::AdamConfig;
use tspgnn::ModelConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory receiving every output of the command.
    pub output_dir: Option<PathBuf>,
    /// Worker threads for evaluation (1 gives bitwise-reproducible runs).
    pub threads: Option<usize>,
    pub model: ModelSection,
    pub generate: GenerateSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub curve: CurveSection,
    pub cost: CostSection,
    pub baseline: BaselineSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d: usize,
    pub t_max: usize,
    pub msg_sizes: Vec<usize>,
    pub init_hidden: Vec<usize>,
    pub vote_hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::default();
        ModelSection {
            d: c.d,
            t_max: c.t_max,
            msg_sizes: c.msg_sizes,
            init_hidden: c.init_hidden,
            vote_hidden: c.vote_hidden,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            t_max: self.t_max,
            msg_sizes: self.msg_sizes.clone(),
            init_hidden: self.init_hidden.clone(),
            vote_hidden: self.vote_hidden.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    /// `euclidean`, `random_metric` or `random`.
    pub distribution: String,
    pub min_n: usize,
    pub max_n: usize,
    pub count: usize,
    pub seed: u64,
    /// Use annealing estimates (flagged approximate) beyond the exact-solver limit.
    pub allow_approximate: bool,
    /// Dataset file name inside the output directory.
    pub file: String,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            distribution: "euclidean".into(),
            min_n: 10,
            max_n: 18,
            count: 4096,
            seed: 1,
            allow_approximate: false,
            file: "dataset.tsv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub dataset: Option<PathBuf>,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub pairs_per_batch: usize,
    pub deviation: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Continue from this checkpoint (epoch numbering and optimizer state carry over).
    pub resume: Option<PathBuf>,
    /// Run the large-deviation fine-tune epoch after the regular epochs.
    pub fine_tune: bool,
    pub fine_tune_deviations: Vec<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let t = tspgnn::train::TrainConfig::default();
        TrainSection {
            dataset: None,
            epochs: t.epochs,
            batches_per_epoch: t.batches_per_epoch,
            pairs_per_batch: t.pairs_per_batch,
            deviation: t.deviation,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seed: t.seed,
            checkpoint_every: t.checkpoint_every,
            resume: None,
            fine_tune: false,
            fine_tune_deviations: tspgnn::train::FINE_TUNE_DEVIATIONS.to_vec(),
        }
    }
}

/// Where evaluation instances come from: a dataset file, or fresh
/// instances generated from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub dataset: Option<PathBuf>,
    pub distribution: String,
    pub min_n: usize,
    pub max_n: usize,
    pub count: usize,
    pub seed: u64,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            dataset: None,
            distribution: "euclidean".into(),
            min_n: 10,
            max_n: 18,
            count: 256,
            seed: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    /// `accuracy`, `sizes` or `distributions`.
    pub mode: String,
    pub deviations: Vec<f64>,
    /// City counts for the size sweep.
    pub sizes: Vec<usize>,
    pub distributions: Vec<String>,
    pub samples: SampleSection,
    pub batch_size: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            checkpoint: None,
            mode: "accuracy".into(),
            deviations: vec![0.01, 0.02, 0.05, 0.10],
            sizes: vec![10, 12, 14, 16, 18, 20, 25, 30],
            distributions: vec!["euclidean".into(), "random_metric".into(), "random".into()],
            samples: SampleSection::default(),
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSection {
    pub checkpoint: Option<PathBuf>,
    /// Use the exact threshold predictor instead of a model.
    pub oracle: bool,
    /// Size classes, one curve each.
    pub sizes: Vec<usize>,
    /// Deviation grid from `-grid_max` to `grid_max` in steps of `grid_step`.
    pub grid_max: f64,
    pub grid_step: f64,
    pub samples: SampleSection,
    pub batch_size: usize,
}

impl Default for CurveSection {
    fn default() -> Self {
        CurveSection {
            checkpoint: None,
            oracle: false,
            sizes: vec![10, 14, 18],
            grid_max: 0.3,
            grid_step: 0.05,
            samples: SampleSection::default(),
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub checkpoint: Option<PathBuf>,
    pub oracle: bool,
    /// TSPLIB files, or the bundled names `ulysses16` and `berlin52`.
    pub tsplib: Vec<String>,
    /// `haversine` or `tsplib` distances for GEO instances.
    pub geo: String,
    pub p: f64,
    pub delta: f64,
    /// Start from the bracket midpoint instead of a random point.
    pub midpoint: bool,
    /// Also report simulated annealing with the default schedule.
    pub sa: bool,
    pub samples: SampleSection,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            checkpoint: None,
            oracle: false,
            tsplib: Vec::new(),
            geo: "haversine".into(),
            p: 0.5,
            delta: 0.01,
            midpoint: false,
            sa: true,
            samples: SampleSection {
                min_n: 10,
                max_n: 15,
                count: 100,
                ..SampleSection::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub checkpoint: Option<PathBuf>,
    pub deviations: Vec<f64>,
    /// Random-search budget for annealing calibration (0 keeps the default schedule).
    pub calibration_budget: usize,
    /// Instances used for calibration, generated separately from the test sample.
    pub calibration_count: usize,
    pub batch_size: usize,
    pub samples: SampleSection,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            checkpoint: None,
            deviations: vec![0.0, 0.01, 0.02, 0.04, 0.06, 0.08, 0.10, 0.15, 0.20, 0.30, 10.0],
            calibration_budget: 24,
            calibration_count: 32,
            batch_size: 32,
            samples: SampleSection {
                min_n: 10,
                max_n: 15,
                count: 100,
                ..SampleSection::default()
            },
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// The resolved configuration, prefixed with a comment naming the tool version.
    /// The result parses back to an equal config.
    pub fn render(&self, command: &str) -> String {
        let body = toml::to_string(self).expect("config serializes");
        format!(
            "# tspgnn {} resolved config for `{command}`\n{body}",
            env!("CARGO_PKG_VERSION")
        )
    }
}
