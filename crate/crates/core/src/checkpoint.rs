//! Versioned text checkpoints.
//!
//! ```text
//! #tspgnn-checkpoint v1
//! scalar f64
//! config d=64 t_max=32 msg_sizes=64,64,64 init_hidden=8,16,32 vote_hidden=64,64
//! meta epoch=40 seed=7 loss=0.3121 accuracy=0.874
//! param edge_init.0.weight 2x8 0.11 -0.42 ...
//! adam step=5120 lr=0.0001 beta1=0.9 beta2=0.999 eps=0.00000001
//! moment1 edge_init.0.weight 0.0003 ...
//! moment2 edge_init.0.weight 0.0000001 ...
//! ```
//!
//! Values use shortest round-trip decimal notation, so a load reproduces
//! every parameter bitwise. The `adam` block is optional.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::autodiff::{AdamConfig, AdamState, ParamStore};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const CHECKPOINT_HEADER: &str = "#tspgnn-checkpoint v1";

/// Training metadata stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointMeta {
    /// Completed training epochs.
    pub epoch: usize,
    pub seed: u64,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f64>,
    pub meta: CheckpointMeta,
    pub adam: Option<AdamState<f64>>,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f64>, meta: CheckpointMeta) -> Self {
        Checkpoint {
            params,
            meta,
            adam: None,
        }
    }

    /// Fails unless the stored architecture equals `expected`.
    pub fn require_config(&self, expected: &ModelConfig) -> Result<()> {
        let got = self.params.config();
        if got == expected {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!(
                "config mismatch: checkpoint has {}, expected {}",
                format_config(got),
                format_config(expected)
            )))
        }
    }
}

fn join(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn format_config(c: &ModelConfig) -> String {
    format!(
        "d={} t_max={} msg_sizes={} init_hidden={} vote_hidden={}",
        c.d,
        c.t_max,
        join(&c.msg_sizes),
        join(&c.init_hidden),
        join(&c.vote_hidden)
    )
}

fn values_line(out: &mut String, values: &[f64]) {
    for v in values {
        let _ = write!(out, " {v}");
    }
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CHECKPOINT_HEADER}")?;
    writeln!(out, "scalar f64")?;
    writeln!(out, "config {}", format_config(ckpt.params.config()))?;
    let m = &ckpt.meta;
    let mut meta = format!("meta epoch={} seed={}", m.epoch, m.seed);
    if let Some(loss) = m.loss {
        let _ = write!(meta, " loss={loss}");
    }
    if let Some(acc) = m.accuracy {
        let _ = write!(meta, " accuracy={acc}");
    }
    writeln!(out, "{meta}")?;
    for (name, p) in ckpt.params.store().iter() {
        let shape = p.value.shape().iter().map(usize::to_string).collect::<Vec<_>>().join("x");
        let mut line = format!("param {name} {shape}");
        values_line(&mut line, p.value.data());
        writeln!(out, "{line}")?;
    }
    if let Some(adam) = &ckpt.adam {
        let c = &adam.config;
        writeln!(
            out,
            "adam step={} lr={} beta1={} beta2={} eps={}",
            adam.step, c.lr, c.beta1, c.beta2, c.eps
        )?;
        for (tag, moments) in [("moment1", &adam.first_moment), ("moment2", &adam.second_moment)] {
            for (name, values) in moments {
                let mut line = format!("{tag} {name}");
                values_line(&mut line, values);
                writeln!(out, "{line}")?;
            }
        }
    }
    out.flush()
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(ckpt, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn key_values(fields: &[&str], line: usize) -> Result<BTreeMap<String, String>> {
    fields
        .iter()
        .map(|f| {
            f.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::parse(line, format!("expected key=value, got `{f}`")))
        })
        .collect()
}

fn take<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, line: usize) -> Result<T> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::parse(line, format!("missing `{key}`")))?;
    raw.parse()
        .map_err(|_| Error::parse(line, format!("bad value for `{key}`: `{raw}`")))
}

fn sizes(map: &BTreeMap<String, String>, key: &str, line: usize) -> Result<Vec<usize>> {
    let raw: String = take(map, key, line)?;
    raw.split(',')
        .map(|s| s.parse().map_err(|_| Error::parse(line, format!("bad size list `{raw}`"))))
        .collect()
}

fn parse_values(fields: &[&str], line: usize, what: &str) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::parse(line, format!("{what}: bad number `{v}`")))
        })
        .collect()
}

pub fn parse_config(fields: &[&str], line: usize) -> Result<ModelConfig> {
    let map = key_values(fields, line)?;
    let config = ModelConfig {
        d: take(&map, "d", line)?,
        t_max: take(&map, "t_max", line)?,
        msg_sizes: sizes(&map, "msg_sizes", line)?,
        init_hidden: sizes(&map, "init_hidden", line)?,
        vote_hidden: sizes(&map, "vote_hidden", line)?,
    };
    config
        .validate()
        .map_err(|e| Error::parse(line, e.to_string()))?;
    Ok(config)
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Checkpoint> {
    let mut config = None;
    let mut meta = None;
    let mut store = ParamStore::new();
    let mut adam: Option<AdamState<f64>> = None;
    let mut seen_header = false;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<checkpoint>", e))?;
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if !seen_header {
            if line.trim() != CHECKPOINT_HEADER {
                return Err(Error::Checkpoint(format!(
                    "unsupported checkpoint header `{}` (expected `{CHECKPOINT_HEADER}`)",
                    line.trim()
                )));
            }
            seen_header = true;
            continue;
        }
        let Some((&kind, rest)) = fields.split_first() else {
            continue;
        };
        match kind {
            "scalar" => {
                if rest != ["f64"] {
                    return Err(Error::Checkpoint(format!("unsupported scalar type {rest:?}")));
                }
            }
            "config" => config = Some(parse_config(rest, lineno)?),
            "meta" => {
                let map = key_values(rest, lineno)?;
                meta = Some(CheckpointMeta {
                    epoch: take(&map, "epoch", lineno)?,
                    seed: take(&map, "seed", lineno)?,
                    loss: map.contains_key("loss").then(|| take(&map, "loss", lineno)).transpose()?,
                    accuracy: map
                        .contains_key("accuracy")
                        .then(|| take(&map, "accuracy", lineno))
                        .transpose()?,
                });
            }
            "param" => {
                let [name, shape, values @ ..] = rest else {
                    return Err(Error::parse(lineno, "param line needs a name and a shape"));
                };
                let dims: Vec<usize> = shape
                    .split('x')
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::Checkpoint(format!("parameter `{name}`: bad shape `{shape}` (line {lineno})"))
                    })?;
                let values = parse_values(values, lineno, name)?;
                let tensor = Tensor::new(dims, values).map_err(|_| {
                    Error::Checkpoint(format!(
                        "parameter `{name}`: value count does not match shape `{shape}` (line {lineno})"
                    ))
                })?;
                store.insert(*name, tensor);
            }
            "adam" => {
                let map = key_values(rest, lineno)?;
                let config = AdamConfig {
                    lr: take(&map, "lr", lineno)?,
                    beta1: take(&map, "beta1", lineno)?,
                    beta2: take(&map, "beta2", lineno)?,
                    eps: take(&map, "eps", lineno)?,
                };
                let mut state = AdamState::new(config, &ParamStore::new());
                state.step = take(&map, "step", lineno)?;
                adam = Some(state);
            }
            "moment1" | "moment2" => {
                let state = adam
                    .as_mut()
                    .ok_or_else(|| Error::parse(lineno, "moment line before `adam` line"))?;
                let [name, values @ ..] = rest else {
                    return Err(Error::parse(lineno, "moment line needs a name"));
                };
                let values = parse_values(values, lineno, name)?;
                let target = if kind == "moment1" {
                    &mut state.first_moment
                } else {
                    &mut state.second_moment
                };
                target.insert(name.to_string(), values);
            }
            other => return Err(Error::parse(lineno, format!("unknown line kind `{other}`"))),
        }
    }
    if !seen_header {
        return Err(Error::Checkpoint("empty checkpoint".into()));
    }
    let config = config.ok_or_else(|| Error::Checkpoint("missing config line".into()))?;
    let meta = meta.ok_or_else(|| Error::Checkpoint("missing meta line".into()))?;
    let params = ModelParams::from_store(config, store)?;
    if let Some(state) = &adam {
        for (name, p) in params.store().iter() {
            for moments in [&state.first_moment, &state.second_moment] {
                match moments.get(name) {
                    Some(v) if v.len() == p.value.len() => {}
                    _ => {
                        return Err(Error::Checkpoint(format!(
                            "optimizer state for parameter `{name}` is missing or has the wrong length"
                        )))
                    }
                }
            }
        }
    }
    Ok(Checkpoint { params, meta, adam })
}
