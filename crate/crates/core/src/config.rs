//! Experiment configuration in a flat `key = value` format.
//!
//! Keys use dotted sections (`strategy.S = 0.15`), `#` starts a comment, and
//! blank lines are ignored. Absent keys take their defaults. The canonical
//! text written by [`ExperimentConfig::to_text`] lists every key, so a results
//! directory always records the full configuration it was produced with.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acquire::AcquisitionKind;
use crate::data::{SplitFractions, SyntheticKind, SyntheticSpec};
use crate::gate::ChernoffMode;
use crate::net::SgdConfig;
use crate::oracle::OracleConfig;
use crate::strategy::{StrategyKind, StrategyParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown key: {0}")]
    UnknownKey(String),
    #[error("invalid value for {key}: '{value}' ({reason})")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected 'key = value', found '{text}'")]
    Syntax { line: usize, text: String },
    #[error("{0}")]
    Invalid(String),
    #[error("parameter '{0}' cannot be swept (sweepable: S, gamma, init_labelled_frac, S_entropy, epsilon.d)")]
    NotSweepable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset_kind: DatasetKind,
    pub synthetic: SyntheticSpec,
    pub csv_path: Option<PathBuf>,
    pub label_column: String,
    /// Fixed data seed; when absent each run seed draws its own dataset.
    pub data_seed: Option<u64>,
    pub split: SplitFractions,

    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub gate_detached: bool,

    pub epochs: usize,
    pub sgd: SgdConfig,

    /// MC dropout passes `T`.
    pub mc_samples: usize,
    /// Acquire every `period` epochs.
    pub acquisition_period: usize,
    /// Fraction `b` of the remaining unlabelled pool acquired per event; 0
    /// disables active learning.
    pub acquisition_frac: f64,
    pub init_labelled_frac: f64,
    pub acquisition: AcquisitionKind,

    pub strategy: StrategyKind,
    pub strategy_params: StrategyParams,
    pub chernoff_mode: ChernoffMode,

    pub oracle: OracleConfig,

    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset_kind: DatasetKind::Synthetic,
            synthetic: SyntheticSpec {
                kind: SyntheticKind::GaussianBlobs,
                n: 1000,
                classes: 2,
                dims: 2,
                separation: 2.0,
            },
            csv_path: None,
            label_column: "label".to_string(),
            data_seed: None,
            split: SplitFractions::default(),
            hidden: vec![32, 32],
            dropout_rate: 0.3,
            gate_detached: false,
            epochs: 50,
            sgd: SgdConfig::default(),
            mc_samples: 20,
            acquisition_period: 5,
            acquisition_frac: 0.02,
            init_labelled_frac: 0.1,
            acquisition: AcquisitionKind::BaldMcd,
            strategy: StrategyKind::Soqal,
            strategy_params: StrategyParams::default(),
            chernoff_mode: ChernoffMode::FullBound,
            oracle: OracleConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            output: PathBuf::from("results"),
        }
    }
}

/// Short sweep names accepted by `sweep`, mapped to config keys.
const SWEEPABLE: [(&str, &str); 5] = [
    ("S", "strategy.S"),
    ("gamma", "oracle.gamma"),
    ("init_labelled_frac", "al.init_labelled_frac"),
    ("S_entropy", "strategy.S_entropy"),
    ("epsilon.d", "strategy.epsilon.d"),
];

/// Resolves a sweep parameter (short name or full key) to its config key.
pub fn sweep_key(param: &str) -> Result<&'static str, ConfigError> {
    SWEEPABLE
        .iter()
        .find(|(short, key)| *short == param || *key == param)
        .map(|&(_, key)| key)
        .ok_or_else(|| ConfigError::NotSweepable(param.to_string()))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: Display>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies a single `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "dataset.kind" => {
                self.dataset_kind = match value {
                    "synthetic" => DatasetKind::Synthetic,
                    "csv" => DatasetKind::Csv,
                    _ => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            value: value.into(),
                            reason: "expected synthetic or csv".into(),
                        })
                    }
                }
            }
            "dataset.synthetic" => self.synthetic.kind = parse(key, value)?,
            "dataset.n" => self.synthetic.n = parse(key, value)?,
            "dataset.classes" => self.synthetic.classes = parse(key, value)?,
            "dataset.dims" => self.synthetic.dims = parse(key, value)?,
            "dataset.separation" => self.synthetic.separation = parse(key, value)?,
            "dataset.path" => {
                self.csv_path = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "dataset.label_column" => self.label_column = value.to_string(),
            "dataset.seed" => {
                self.data_seed = if value.is_empty() { None } else { Some(parse(key, value)?) }
            }
            "split.train" => self.split.train = parse(key, value)?,
            "split.val" => self.split.val = parse(key, value)?,
            "split.test" => self.split.test = parse(key, value)?,
            "network.hidden" => self.hidden = parse_list(key, value)?,
            "network.dropout" => self.dropout_rate = parse(key, value)?,
            "network.gate_detached" => self.gate_detached = parse(key, value)?,
            "training.epochs" => self.epochs = parse(key, value)?,
            "training.learning_rate" => self.sgd.learning_rate = parse(key, value)?,
            "training.batch_size" => self.sgd.batch_size = parse(key, value)?,
            "al.mc_samples" => self.mc_samples = parse(key, value)?,
            "al.period" => self.acquisition_period = parse(key, value)?,
            "al.b" => self.acquisition_frac = parse(key, value)?,
            "al.init_labelled_frac" => self.init_labelled_frac = parse(key, value)?,
            "al.acquisition" => self.acquisition = parse(key, value)?,
            "strategy" | "strategy.name" => self.strategy = parse(key, value)?,
            "strategy.S" => self.strategy_params.hellinger_threshold = parse(key, value)?,
            "strategy.S_entropy" => self.strategy_params.entropy_threshold = parse(key, value)?,
            "strategy.epsilon0" => self.strategy_params.epsilon0 = parse(key, value)?,
            "strategy.epsilon.d" => self.strategy_params.epsilon_decay = parse(key, value)?,
            "strategy.chernoff_mode" => {
                self.chernoff_mode = match value {
                    "full-bound" => ChernoffMode::FullBound,
                    "exponent-only" => ChernoffMode::ExponentOnly,
                    _ => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            value: value.into(),
                            reason: "expected full-bound or exponent-only".into(),
                        })
                    }
                }
            }
            "oracle.kind" => self.oracle.kind = parse(key, value)?,
            "oracle.gamma" => self.oracle.gamma = parse(key, value)?,
            "oracle.embed_dims" => self.oracle.embed_dims = parse(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "output" => self.output = PathBuf::from(value),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Parses `key=value` and applies it.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: assignment.to_string(),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        unit("strategy.S", self.strategy_params.hellinger_threshold)?;
        unit("strategy.S_entropy", self.strategy_params.entropy_threshold)?;
        unit("strategy.epsilon0", self.strategy_params.epsilon0)?;
        unit("oracle.gamma", self.oracle.gamma)?;
        unit("al.b", self.acquisition_frac)?;
        let d = self.strategy_params.epsilon_decay;
        if !(d > 0.0 && d <= 1.0) {
            return Err(ConfigError::Invalid(format!("strategy.epsilon.d = {d} must lie in (0, 1]")));
        }
        if !(self.init_labelled_frac > 0.0 && self.init_labelled_frac <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "al.init_labelled_frac = {} must lie in (0, 1]",
                self.init_labelled_frac
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ConfigError::Invalid(format!(
                "network.dropout = {} must lie in [0, 1)",
                self.dropout_rate
            )));
        }
        let positive = [
            ("training.epochs", self.epochs),
            ("training.batch_size", self.sgd.batch_size),
            ("al.mc_samples", self.mc_samples),
            ("al.period", self.acquisition_period),
            ("oracle.embed_dims", self.oracle.embed_dims),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if !(self.sgd.learning_rate >= 0.0 && self.sgd.learning_rate.is_finite()) {
            return Err(ConfigError::Invalid("training.learning_rate must be finite and >= 0".into()));
        }
        if self.dataset_kind == DatasetKind::Csv && self.csv_path.is_none() {
            return Err(ConfigError::Invalid("dataset.kind = csv requires dataset.path".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must list at least one seed".into()));
        }
        Ok(())
    }

    /// Every key with its value, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let chernoff = match self.chernoff_mode {
            ChernoffMode::FullBound => "full-bound",
            ChernoffMode::ExponentOnly => "exponent-only",
        };
        let entries: Vec<(&str, String)> = vec![
            (
                "dataset.kind",
                match self.dataset_kind {
                    DatasetKind::Synthetic => "synthetic".into(),
                    DatasetKind::Csv => "csv".into(),
                },
            ),
            ("dataset.synthetic", self.synthetic.kind.name().into()),
            ("dataset.n", self.synthetic.n.to_string()),
            ("dataset.classes", self.synthetic.classes.to_string()),
            ("dataset.dims", self.synthetic.dims.to_string()),
            ("dataset.separation", self.synthetic.separation.to_string()),
            (
                "dataset.path",
                self.csv_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("dataset.label_column", self.label_column.clone()),
            ("dataset.seed", self.data_seed.map(|s| s.to_string()).unwrap_or_default()),
            ("split.train", self.split.train.to_string()),
            ("split.val", self.split.val.to_string()),
            ("split.test", self.split.test.to_string()),
            ("network.hidden", join(&self.hidden)),
            ("network.dropout", self.dropout_rate.to_string()),
            ("network.gate_detached", self.gate_detached.to_string()),
            ("training.epochs", self.epochs.to_string()),
            ("training.learning_rate", self.sgd.learning_rate.to_string()),
            ("training.batch_size", self.sgd.batch_size.to_string()),
            ("al.mc_samples", self.mc_samples.to_string()),
            ("al.period", self.acquisition_period.to_string()),
            ("al.b", self.acquisition_frac.to_string()),
            ("al.init_labelled_frac", self.init_labelled_frac.to_string()),
            ("al.acquisition", self.acquisition.name().into()),
            ("strategy", self.strategy.name().into()),
            ("strategy.S", self.strategy_params.hellinger_threshold.to_string()),
            ("strategy.S_entropy", self.strategy_params.entropy_threshold.to_string()),
            ("strategy.epsilon0", self.strategy_params.epsilon0.to_string()),
            ("strategy.epsilon.d", self.strategy_params.epsilon_decay.to_string()),
            ("strategy.chernoff_mode", chernoff.into()),
            ("oracle.kind", self.oracle.kind.name().into()),
            ("oracle.gamma", self.oracle.gamma.to_string()),
            ("oracle.embed_dims", self.oracle.embed_dims.to_string()),
            ("seeds", join(&self.seeds)),
            ("output", self.output.display().to_string()),
        ];
        entries.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of the canonical text, excluding the
    /// seed list and output directory, which do not affect a single run.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.seeds = vec![0];
        c.output = PathBuf::new();
        let digest = Sha256::digest(c.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
