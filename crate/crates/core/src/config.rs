//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown or repeated keys are
//! errors. Keys not present keep their defaults. [`to_kv_string`] writes
//! every key, so its output fully determines a run.

use std::collections::HashSet;
use std::str::FromStr;

use crate::evolution::EvolutionConfig;
use crate::{Error, Result};

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse {key} = {value:?}")))
}

/// Applies the assignments in `text` on top of `base`.
pub fn apply_kv(base: &EvolutionConfig, text: &str) -> Result<EvolutionConfig> {
    let mut cfg = base.clone();
    let mut seen = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value")))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("line {line_no}: {key} set twice")));
        }
        macro_rules! set {
            ($field:expr) => {
                $field = parse_value(line_no, key, value)?
            };
        }
        match key {
            "population_size" => set!(cfg.population_size),
            "max_generations" => set!(cfg.max_generations),
            "length_min" => set!(cfg.ranges.length.0),
            "length_max" => set!(cfg.ranges.length.1),
            "neurons_min" => set!(cfg.ranges.neurons.0),
            "neurons_max" => set!(cfg.ranges.neurons.1),
            "dropout_min" => set!(cfg.ranges.dropout.0),
            "dropout_max" => set!(cfg.ranges.dropout.1),
            "embedding_dim_min" => set!(cfg.ranges.embedding_dim.0),
            "embedding_dim_max" => set!(cfg.ranges.embedding_dim.1),
            "sbx_probability" => set!(cfg.operators.sbx_probability),
            "pm_probability" => set!(cfg.operators.pm_probability),
            "distribution_index" => set!(cfg.operators.distribution_index),
            "elitism_rate" => set!(cfg.operators.elitism_rate),
            "length_mutation_probability" => set!(cfg.operators.length_mutation_probability),
            "learning_rate" => set!(cfg.train.learning_rate),
            "proxy_epochs" => set!(cfg.train.proxy_epochs),
            "batch_size" => set!(cfg.train.batch_size),
            "negatives_per_positive" => set!(cfg.train.negatives_per_positive),
            "optimizer" => set!(cfg.train.optimizer),
            "top_k" => set!(cfg.top_k),
            "final_epochs" => set!(cfg.final_epochs),
            "seed" => set!(cfg.seed),
            "jobs" => set!(cfg.jobs),
            other => return Err(Error::Config(format!("line {line_no}: unknown key {other:?}"))),
        }
    }
    Ok(cfg)
}

/// Parses a configuration document over the defaults and validates it.
pub fn parse_kv(text: &str) -> Result<EvolutionConfig> {
    let cfg = apply_kv(&EvolutionConfig::default(), text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Every key, one per line, in a fixed order. The checkpoint directory is not included.
pub fn to_kv_string(cfg: &EvolutionConfig) -> String {
    let r = &cfg.ranges;
    let o = &cfg.operators;
    let t = &cfg.train;
    let pairs: Vec<(&str, String)> = vec![
        ("population_size", cfg.population_size.to_string()),
        ("max_generations", cfg.max_generations.to_string()),
        ("length_min", r.length.0.to_string()),
        ("length_max", r.length.1.to_string()),
        ("neurons_min", r.neurons.0.to_string()),
        ("neurons_max", r.neurons.1.to_string()),
        ("dropout_min", r.dropout.0.to_string()),
        ("dropout_max", r.dropout.1.to_string()),
        ("embedding_dim_min", r.embedding_dim.0.to_string()),
        ("embedding_dim_max", r.embedding_dim.1.to_string()),
        ("sbx_probability", o.sbx_probability.to_string()),
        ("pm_probability", o.pm_probability.to_string()),
        ("distribution_index", o.distribution_index.to_string()),
        ("elitism_rate", o.elitism_rate.to_string()),
        ("length_mutation_probability", o.length_mutation_probability.to_string()),
        ("learning_rate", t.learning_rate.to_string()),
        ("proxy_epochs", t.proxy_epochs.to_string()),
        ("batch_size", t.batch_size.to_string()),
        ("negatives_per_positive", t.negatives_per_positive.to_string()),
        ("optimizer", t.optimizer.to_string()),
        ("top_k", cfg.top_k.to_string()),
        ("final_epochs", cfg.final_epochs.to_string()),
        ("seed", cfg.seed.to_string()),
        ("jobs", cfg.jobs.to_string()),
    ];
    pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
