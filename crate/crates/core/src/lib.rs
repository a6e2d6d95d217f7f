//! Pool-based active learning with selective oracle questioning.
//!
//! A network with a class head and a gate head is trained on a labelled pool.
//! The gate learns to predict when the class head is wrong; the separation of
//! its outputs on correct versus wrong predictions decides whether acquired
//! instances are sent to a (possibly noisy) simulated oracle or labelled by
//! the network itself.

pub mod acquire;
pub mod config;
pub mod data;
pub mod engine;
pub mod gate;
pub mod metrics;
pub mod net;
pub mod oracle;
pub mod pca;
pub mod rng;
pub mod strategy;

pub use acquire::{AcquisitionKind, PosteriorSamples};
pub use config::{ConfigError, ExperimentConfig};
pub use data::Dataset;
pub use engine::{ask_rate, run_experiment, EngineError, EpochRecord, ResultLog};
pub use gate::{ChernoffMode, ChernoffResult, GateStats};
pub use net::{Network, NetworkConfig};
pub use oracle::{OracleConfig, OracleKind};
pub use strategy::{LabelSource, StrategyKind, StrategyParams};

/// Written into every results file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
