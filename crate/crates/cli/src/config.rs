//! Run configuration assembled from defaults, an optional `key = value` file
//! and command-line flags, in increasing order of precedence.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use mtlf_core::dataset::{SplitSpec, Stage};
use mtlf_core::ensemble::{Aggregation, EnsembleConfig};
use mtlf_core::optim::OptimizerKind;

use crate::TrainArgs;

/// Everything a training run depends on besides the data file.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub ensemble: EnsembleConfig,
    pub split: SplitSpec,
    pub stage: Stage,
}

pub const KEYS: &[&str] = &[
    "epochs",
    "lr",
    "m",
    "tau",
    "lambda",
    "L",
    "K",
    "R",
    "seed",
    "batch-size",
    "clip",
    "threads",
    "optimizer",
    "aggregation",
    "stage",
    "test-months",
    "valid-months",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow!("invalid value {value:?} for {key}: {e}"))
}

fn parse_optimizer(value: &str) -> Result<OptimizerKind> {
    match value {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => bail!("unknown optimizer {other:?} (expected adam or sgd)"),
    }
}

fn parse_aggregation(value: &str) -> Result<Aggregation> {
    match value {
        "mean" => Ok(Aggregation::Mean),
        "median" => Ok(Aggregation::Median),
        "trimmed_mean" => Ok(Aggregation::TrimmedMean),
        other => bail!("unknown aggregation {other:?} (expected mean, median or trimmed_mean)"),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.ensemble;
        let t = &mut e.base;
        match key {
            "epochs" => t.epochs = parse(key, value)?,
            "lr" => t.learning_rate = parse(key, value)?,
            "m" => t.state_size = parse(key, value)?,
            "tau" => t.loss.tau = parse(key, value)?,
            "lambda" => t.loss.lambda = parse(key, value)?,
            "L" => t.snapshot_window = parse(key, value)?,
            "K" => e.pool_size = parse(key, value)?,
            "R" => e.runs = parse(key, value)?,
            "seed" => e.master_seed = parse(key, value)?,
            "batch-size" => t.batch_size = parse(key, value)?,
            "clip" => t.gradient_clip = parse(key, value)?,
            "threads" => e.threads = Some(parse(key, value)?),
            "optimizer" => t.optimizer = parse_optimizer(value)?,
            "aggregation" => e.aggregation = parse_aggregation(value)?,
            "stage" => self.stage = parse(key, value)?,
            "test-months" => self.split.test_months = parse(key, value)?,
            "valid-months" => self.split.valid_months = parse(key, value)?,
            other => bail!("unknown configuration key {other:?}; known keys: {}", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
        for (key, value) in parse_config_text(&text)? {
            self.set(&key, &value)
                .with_context(|| format!("in config file {}", path.display()))?;
        }
        Ok(())
    }

    pub fn from_args(args: &TrainArgs) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &args.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in args.overrides() {
            cfg.set(key, &value)?;
        }
        cfg.ensemble.validate()?;
        Ok(cfg)
    }
}

/// Parses `key = value` lines; blank lines and lines starting with `#` are
/// skipped. Later duplicates win.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {line:?}", n + 1))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}
