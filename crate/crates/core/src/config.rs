//! Flat, module-namespaced settings (`train.epochs = 300`) read from TOML.
//!
//! Nested tables and dotted keys are flattened to the same `module.key` form,
//! so `[train]\nepochs = 300` and `train.epochs = 300` are equivalent.
//! Unknown keys are rejected to catch typos.

use std::collections::BTreeMap;
use std::path::Path;

use toml::Value;

use crate::contribution::{ContributionConfig, StepRule};
use crate::neuralnet::{Activation, TrainConfig};
use crate::{Error, Result};

pub const SEED_ENV: &str = "ANOMALENS_SEED";

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "train.epochs",
    "train.batch_size",
    "train.learning_rate",
    "train.weight_decay",
    "model.hidden",
    "model.hidden_activation",
    "model.output_activation",
    "contribution.lambdas",
    "contribution.step",
    "contribution.max_iters",
    "contribution.mse_stop",
    "contribution.tolerance",
    "sim.n_components",
    "sim.dims_per_component",
    "sim.beta",
    "sim.gamma",
    "sim.n_records",
    "sim.layout",
    "sim61.runs",
    "sim61.n_faulty",
    "multimodal.n_train",
    "multimodal.n_test",
    "multimodal.second",
    "multimodal.shared",
    "multimodal.pretrain_epochs",
    "multimodal.finetune_epochs",
    "multimodal.learning_rate",
    "multimodal.batch_size",
    "multimodal.pretraining",
    "multimodal.n_faults",
    "multimodal.trials",
    "multimodal.comparison_seeds",
    "multimodal.spike_magnitude",
    "multimodal.structure_seed",
    "eval.window",
    "eval.target_fpr",
    "nslkdd.data_dir",
    "nslkdd.subsample",
    "nslkdd.seeds",
    "nslkdd.pca_components",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        if let Some(k) = values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        Ok(Self { values })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::from_path)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn wrong(key: &str, want: &str, v: &Value) -> Error {
        Error::Config(format!("'{key}' must be {want}, got {v}"))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(Self::wrong(key, "a number", v)),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(Self::wrong(key, "a non-negative integer", v)),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(Self::wrong(key, "true or false", v)),
        }
    }

    pub fn string(&self, key: &str) -> Result<Option<String>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Self::wrong(key, "a string", v)),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(Self::wrong(key, "a list of numbers", other)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(Self::wrong(key, "a list of numbers", v)),
        }
    }

    /// A single integer is accepted as a one-element list.
    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(vec![*i as usize])),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    other => Err(Self::wrong(key, "a list of non-negative integers", other)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(Self::wrong(key, "a list of non-negative integers", v)),
        }
    }

    pub fn activation(&self, key: &str) -> Result<Option<Activation>> {
        self.string(key)?
            .map(|s| s.parse().map_err(|_| Error::Config(format!("'{key}': unknown activation '{s}'"))))
            .transpose()
    }

    /// Command-line seed, then the config file, then `ANOMALENS_SEED`, then 0.
    pub fn seed(&self, cli: Option<u64>) -> Result<u64> {
        if let Some(s) = cli {
            return Ok(s);
        }
        if let Some(s) = self.u64("seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not a non-negative integer"))),
            Err(_) => Ok(0),
        }
    }

    pub fn apply_train(&self, cfg: &mut TrainConfig) -> Result<()> {
        if let Some(v) = self.usize("train.epochs")? {
            cfg.epochs = v;
        }
        if let Some(v) = self.usize("train.batch_size")? {
            cfg.batch_size = v;
        }
        if let Some(v) = self.f64("train.learning_rate")? {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.f64("train.weight_decay")? {
            cfg.weight_decay = v;
        }
        Ok(())
    }

    pub fn apply_contribution(&self, cfg: &mut ContributionConfig) -> Result<()> {
        if let Some(v) = self.f64_list("contribution.lambdas")? {
            cfg.lambdas = v;
        }
        match self.values.get("contribution.step") {
            None => {}
            Some(Value::String(s)) if s == "backtracking" => cfg.step = StepRule::Backtracking { initial: 1.0 },
            Some(_) => {
                let step = self.f64("contribution.step")?.expect("present");
                cfg.step = StepRule::Fixed { step };
            }
        }
        if let Some(v) = self.usize("contribution.max_iters")? {
            cfg.max_iters = v;
        }
        if let Some(v) = self.f64("contribution.mse_stop")? {
            cfg.mse_stop = Some(v);
        }
        if let Some(v) = self.f64("contribution.tolerance")? {
            cfg.tolerance = v;
        }
        cfg.validate()
    }
}
