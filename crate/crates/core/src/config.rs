//! Run configuration: a strict `key = value` text format.
//!
//! Every key is listed in [`KEYS`]; unknown keys, duplicate keys and
//! malformed values are errors. Omitted keys take the defaults of
//! [`RunConfig::default`], except the mandatory `dataset.1.file` and
//! `output.dir`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::{Activation, NetworkConfig};
use crate::trainer::CdlcConfig;

/// Accepted keys; `<n>` is a positive dataset number, `<task>` a task name.
pub const KEYS: &[&str] = &[
    "dataset.<n>.file",
    "dataset.<n>.num_targets",
    "dataset.ignore_first_attribute",
    "test.file",
    "output.dir",
    "output.per_source",
    "drop.fraction",
    "drop.seed",
    "cdlc.select_per_task",
    "cdlc.max_iterations",
    "cdlc.min_confidence.<task>",
    "cdlc.retrain_from_scratch",
    "cdlc.eval_every_iteration",
    "net.shared_layers",
    "net.head_layers.<task>",
    "net.dropout",
    "net.activation",
    "net.epochs",
    "net.learning_rate",
    "net.momentum",
    "net.batch_size",
    "net.mc_passes",
    "net.seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub file: PathBuf,
    pub num_targets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub datasets: Vec<DatasetEntry>,
    pub test_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Also write one completed ARFF per input file.
    pub per_source_output: bool,
    pub drop_fraction: Option<f64>,
    pub drop_seed: u64,
    /// Treat the first attribute of every file as an instance name column.
    pub ignore_first_attribute: bool,
    pub cdlc: CdlcConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            datasets: Vec::new(),
            test_file: None,
            output_dir: PathBuf::new(),
            per_source_output: false,
            drop_fraction: None,
            drop_seed: 1,
            ignore_first_attribute: false,
            cdlc: CdlcConfig::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value', found '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}' given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value for '{key}': {message}")]
    InvalidValue { line: usize, key: String, message: String },
    #[error("missing mandatory key '{0}'")]
    Missing(String),
}

fn invalid(line: usize, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue { line, key: key.to_string(), message: message.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| invalid(line, key, format!("'{value}': {e}")))
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_num(line, key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(line, key, format!("'{value}' is not a finite number")))
    }
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(line, key, format!("'{value}' is not a boolean"))),
    }
}

fn parse_sizes(line: usize, key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| {
            let n: usize = parse_num(line, key, s.trim())?;
            if n == 0 {
                Err(invalid(line, key, "layer sizes must be positive"))
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn positive(line: usize, key: &str, value: &str) -> Result<usize, ConfigError> {
    let n: usize = parse_num(line, key, value)?;
    if n == 0 {
        Err(invalid(line, key, "must be at least 1"))
    } else {
        Ok(n)
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut files: BTreeMap<usize, (usize, PathBuf)> = BTreeMap::new();
    let mut targets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut output_dir = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax { line, text: content.to_string() });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax { line, text: content.to_string() });
        }
        if seen.insert(key.to_string(), line).is_some() {
            return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
        }
        let net = &mut cfg.cdlc.network;
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["dataset", "ignore_first_attribute"] => cfg.ignore_first_attribute = parse_bool(line, key, value)?,
            ["dataset", n, field @ ("file" | "num_targets")] => {
                let n = positive(line, key, n).map_err(|_| ConfigError::UnknownKey { line, key: key.to_string() })?;
                if *field == "file" {
                    if value.is_empty() {
                        return Err(invalid(line, key, "empty path"));
                    }
                    files.insert(n, (line, PathBuf::from(value)));
                } else {
                    targets.insert(n, (line, parse_num(line, key, value)?));
                }
            }
            ["test", "file"] => cfg.test_file = Some(PathBuf::from(value)),
            ["output", "dir"] => output_dir = Some(PathBuf::from(value)),
            ["output", "per_source"] => cfg.per_source_output = parse_bool(line, key, value)?,
            ["drop", "fraction"] => {
                let f = parse_f64(line, key, value)?;
                if !(0.0..=1.0).contains(&f) {
                    return Err(invalid(line, key, format!("{f} outside [0, 1]")));
                }
                cfg.drop_fraction = Some(f);
            }
            ["drop", "seed"] => cfg.drop_seed = parse_num(line, key, value)?,
            ["cdlc", "select_per_task"] => cfg.cdlc.select_per_task = positive(line, key, value)?,
            ["cdlc", "max_iterations"] => cfg.cdlc.max_iterations = Some(positive(line, key, value)?),
            ["cdlc", "min_confidence", task @ ..] if !task.is_empty() => {
                cfg.cdlc.min_confidence.insert(task.join("."), parse_f64(line, key, value)?);
            }
            ["cdlc", "retrain_from_scratch"] => cfg.cdlc.retrain_from_scratch = parse_bool(line, key, value)?,
            ["cdlc", "eval_every_iteration"] => cfg.cdlc.eval_every_iteration = parse_bool(line, key, value)?,
            ["net", "shared_layers"] => net.shared_layer_sizes = parse_sizes(line, key, value)?,
            ["net", "head_layers", task @ ..] if !task.is_empty() => {
                net.head_hidden_sizes.insert(task.join("."), parse_sizes(line, key, value)?);
            }
            ["net", "dropout"] => {
                let p = parse_f64(line, key, value)?;
                if !(0.0..1.0).contains(&p) {
                    return Err(invalid(line, key, format!("{p} outside [0, 1)")));
                }
                net.dropout_rate = p;
            }
            ["net", "activation"] => net.hidden_activation = value.parse::<Activation>().map_err(|m| invalid(line, key, m))?,
            ["net", "epochs"] => net.epochs = positive(line, key, value)?,
            ["net", "learning_rate"] => {
                let lr = parse_f64(line, key, value)?;
                if lr <= 0.0 {
                    return Err(invalid(line, key, "must be positive"));
                }
                net.learning_rate = lr;
            }
            ["net", "momentum"] => {
                let m = parse_f64(line, key, value)?;
                if !(0.0..1.0).contains(&m) {
                    return Err(invalid(line, key, format!("{m} outside [0, 1)")));
                }
                net.momentum = m;
            }
            ["net", "batch_size"] => net.batch_size = positive(line, key, value)?,
            ["net", "mc_passes"] => net.mc_passes = positive(line, key, value)?,
            ["net", "seed"] => net.seed = parse_num(line, key, value)?,
            _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
        }
    }

    if !files.contains_key(&1) {
        return Err(ConfigError::Missing("dataset.1.file".into()));
    }
    if let Some((&n, _)) = targets.iter().find(|(n, _)| !files.contains_key(n)) {
        return Err(ConfigError::Missing(format!("dataset.{n}.file")));
    }
    cfg.datasets = files
        .iter()
        .map(|(n, (_, file))| DatasetEntry { file: file.clone(), num_targets: targets.get(n).map_or(0, |t| t.1) })
        .collect();
    cfg.output_dir = output_dir.ok_or_else(|| ConfigError::Missing("output.dir".into()))?;
    if cfg.cdlc.network.dropout_rate > 0.0 && cfg.cdlc.network.mc_passes < 2 {
        let line = seen.get("net.mc_passes").copied().unwrap_or(0);
        return Err(invalid(line, "net.mc_passes", "must be at least 2 when net.dropout > 0"));
    }
    Ok(cfg)
}

fn join_sizes(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Renders the fully defaulted configuration in the input format.
    /// Parsing the result yields an identical configuration.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        for (i, d) in self.datasets.iter().enumerate() {
            let _ = writeln!(s, "dataset.{}.file = {}", i + 1, d.file.display());
            let _ = writeln!(s, "dataset.{}.num_targets = {}", i + 1, d.num_targets);
        }
        let _ = writeln!(s, "dataset.ignore_first_attribute = {}", self.ignore_first_attribute);
        if let Some(t) = &self.test_file {
            let _ = writeln!(s, "test.file = {}", t.display());
        }
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        let _ = writeln!(s, "output.per_source = {}", self.per_source_output);
        if let Some(f) = self.drop_fraction {
            let _ = writeln!(s, "drop.fraction = {f}");
        }
        let _ = writeln!(s, "drop.seed = {}", self.drop_seed);
        let c = &self.cdlc;
        let _ = writeln!(s, "cdlc.select_per_task = {}", c.select_per_task);
        if let Some(m) = c.max_iterations {
            let _ = writeln!(s, "cdlc.max_iterations = {m}");
        }
        for (task, v) in &c.min_confidence {
            let _ = writeln!(s, "cdlc.min_confidence.{task} = {v}");
        }
        let _ = writeln!(s, "cdlc.retrain_from_scratch = {}", c.retrain_from_scratch);
        let _ = writeln!(s, "cdlc.eval_every_iteration = {}", c.eval_every_iteration);
        let n: &NetworkConfig = &c.network;
        let _ = writeln!(s, "net.shared_layers = {}", join_sizes(&n.shared_layer_sizes));
        for (task, sizes) in &n.head_hidden_sizes {
            let _ = writeln!(s, "net.head_layers.{task} = {}", join_sizes(sizes));
        }
        let _ = writeln!(s, "net.dropout = {}", n.dropout_rate);
        let _ = writeln!(s, "net.activation = {}", n.hidden_activation);
        let _ = writeln!(s, "net.epochs = {}", n.epochs);
        let _ = writeln!(s, "net.learning_rate = {}", n.learning_rate);
        let _ = writeln!(s, "net.momentum = {}", n.momentum);
        let _ = writeln!(s, "net.batch_size = {}", n.batch_size);
        let _ = writeln!(s, "net.mc_passes = {}", n.mc_passes);
        let _ = writeln!(s, "net.seed = {}", n.seed);
        s
    }
}
