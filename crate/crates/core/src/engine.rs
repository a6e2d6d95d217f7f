//! The active-learning loop.
//!
//! Each epoch trains on the labelled pool, refits the gate statistics on the
//! labelled pool with dropout off, and every `period` epochs acquires the
//! top-`b` fraction of the unlabelled pool. Each acquired instance is then
//! labelled by the oracle or by the network according to the questioning
//! strategy and moves to the labelled pool.

use rand::SeedableRng;
use thiserror::Error;

use crate::acquire::{score_pool, select_top_b, AcquireError};
use crate::config::{DatasetKind, ExperimentConfig};
use crate::data::{gen_synthetic, load_csv, split, DataError, Dataset, Split, Standardizer};
use crate::gate::{chernoff_bound, fit_conditional_gaussians, GateError, GateStats};
use crate::metrics::{auc_ovr, MetricError};
use crate::net::{ForwardMode, NetError, Network, NetworkConfig, Output};
use crate::oracle::{NeighborTable, Oracle, OracleError, OracleKind};
use crate::rng::{derive_seed, RunRng};
use crate::strategy::{decide, LabelSource, QuestionContext};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Acquire(#[from] AcquireError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelledEntry {
    pub id: usize,
    /// The label training sees; never the true label of a self-labelled
    /// instance unless the prediction happened to be right.
    pub label: usize,
    pub source: LabelSource,
}

/// Labelled and unlabelled partition of the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    labelled: Vec<LabelledEntry>,
    unlabelled: Vec<usize>,
}

impl PoolState {
    pub fn new(labelled: Vec<LabelledEntry>, mut unlabelled: Vec<usize>) -> Self {
        unlabelled.sort_unstable();
        PoolState {
            labelled,
            unlabelled,
        }
    }

    pub fn labelled(&self) -> &[LabelledEntry] {
        &self.labelled
    }

    pub fn unlabelled(&self) -> &[usize] {
        &self.unlabelled
    }

    /// Moves `id` from the unlabelled to the labelled pool.
    pub fn label(&mut self, id: usize, label: usize, source: LabelSource) {
        let pos = self
            .unlabelled
            .binary_search(&id)
            .expect("only unlabelled instances can be labelled");
        self.unlabelled.remove(pos);
        self.labelled.push(LabelledEntry { id, label, source });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub gate_loss: f64,
    pub val_auc: Option<f64>,
    pub d_hellinger: f64,
    pub chernoff_bound: Option<f64>,
    pub beta_star: Option<f64>,
    pub cum_ask_rate: Option<f64>,
    pub n_labelled: usize,
    pub n_unlabelled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcquisitionRecord {
    pub epoch: usize,
    pub acquisition_index: usize,
    pub instance: usize,
    pub assigned_label: usize,
    pub source: LabelSource,
    /// Kept for evaluation only; the training path reads `assigned_label`.
    pub true_label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultLog {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<EpochRecord>,
    pub test_auc: f64,
    pub acquisitions: Vec<AcquisitionRecord>,
    pub class_names: Vec<String>,
    pub stratified: bool,
    pub split: Split,
    /// The labelled pool at the end of the run, in the order instances joined.
    pub labelled: Vec<LabelledEntry>,
}

impl ResultLog {
    /// Equality ignoring the config hash.
    pub fn same_outcome(&self, other: &ResultLog) -> bool {
        ResultLog {
            config_hash: String::new(),
            ..self.clone()
        } == ResultLog {
            config_hash: String::new(),
            ..other.clone()
        }
    }
}

/// Fraction of acquired instances whose labels came from the oracle.
pub fn ask_rate(log: &ResultLog) -> Result<f64, MetricError> {
    if log.acquisitions.is_empty() {
        return Err(MetricError::NoAcquisitions);
    }
    let asked = log
        .acquisitions
        .iter()
        .filter(|a| a.source == LabelSource::Oracle)
        .count();
    Ok(asked as f64 / log.acquisitions.len() as f64)
}

/// Loads or synthesises the configured dataset for `seed`.
pub fn load_dataset(config: &ExperimentConfig, seed: u64) -> Result<Dataset, EngineError> {
    match config.dataset_kind {
        DatasetKind::Synthetic => {
            let data_seed = config.data_seed.unwrap_or_else(|| derive_seed(seed, &[1]));
            Ok(gen_synthetic(&config.synthetic, data_seed)?)
        }
        DatasetKind::Csv => {
            let path = config
                .csv_path
                .as_ref()
                .ok_or_else(|| EngineError::Config("csv dataset without a path".into()))?;
            Ok(load_csv(path, &config.label_column)?)
        }
    }
}

fn predict(net: &Network, features: &[Vec<f64>], ids: &[usize]) -> Result<Vec<Output>, NetError> {
    ids.iter()
        .map(|&i| net.forward(&features[i], ForwardMode::Deterministic))
        .collect()
}

/// Runs one experiment end to end. Identical `(config, seed)` give identical
/// logs.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<ResultLog, EngineError> {
    config.validate().map_err(|e| EngineError::Config(e.to_string()))?;
    let dataset = load_dataset(config, seed)?;
    let classes = dataset.class_count();
    if classes < 2 {
        return Err(EngineError::Config("dataset has fewer than two classes".into()));
    }
    let parts = split(
        &dataset.labels,
        classes,
        config.split,
        config.init_labelled_frac,
        derive_seed(seed, &[2]),
    )?;
    if parts.initial_labelled.is_empty() {
        return Err(EngineError::Config("initial labelled pool is empty".into()));
    }
    let features = Standardizer::fit(&dataset.features, &parts.train).transform(&dataset.features);
    let true_labels = &dataset.labels;

    let mut init_rng = RunRng::seed_from_u64(derive_seed(seed, &[3]));
    let mut net = Network::new(
        &NetworkConfig {
            input_dim: dataset.dims(),
            hidden: config.hidden.clone(),
            classes,
            dropout_rate: config.dropout_rate,
            gate_detached: config.gate_detached,
        },
        &mut init_rng,
    )?;
    let mut train_rng = RunRng::seed_from_u64(derive_seed(seed, &[4]));
    let score_seed = derive_seed(seed, &[5]);
    let mut question_rng = RunRng::seed_from_u64(derive_seed(seed, &[6]));

    let mut oracle = Oracle::new(config.oracle, classes)?;
    if config.oracle.kind == OracleKind::NnFlip {
        let table = NeighborTable::build(&features, true_labels, &parts.train, config.oracle.embed_dims)?;
        oracle = oracle.with_neighbors(table, true_labels.clone());
    }

    let initial: Vec<LabelledEntry> = parts
        .initial_labelled
        .iter()
        .map(|&id| LabelledEntry {
            id,
            label: true_labels[id],
            source: LabelSource::Initial,
        })
        .collect();
    let unlabelled: Vec<usize> = parts
        .train
        .iter()
        .copied()
        .filter(|id| parts.initial_labelled.binary_search(id).is_err())
        .collect();
    let mut pool = PoolState::new(initial, unlabelled);

    let val_labels: Vec<usize> = parts.val.iter().map(|&i| true_labels[i]).collect();
    let mut rows = Vec::with_capacity(config.epochs);
    let mut acquisitions: Vec<AcquisitionRecord> = Vec::new();
    let mut acquisition_events = 0usize;

    for epoch in 1..=config.epochs {
        let ids: Vec<usize> = pool.labelled().iter().map(|e| e.id).collect();
        let targets: Vec<usize> = pool.labelled().iter().map(|e| e.label).collect();
        let inputs: Vec<&[f64]> = ids.iter().map(|&i| features[i].as_slice()).collect();
        let stats = net.train_epoch(&inputs, &targets, &config.sgd, &mut train_rng)?;

        let outputs = predict(&net, &features, &ids)?;
        let gate_outputs: Vec<f64> = outputs.iter().map(|o| o.gate).collect();
        let errors: Vec<bool> = outputs
            .iter()
            .zip(&targets)
            .map(|(o, &t)| o.predicted_class() != t)
            .collect();
        let gate_stats = fit_conditional_gaussians(&gate_outputs, &errors)?;
        let chernoff = if gate_stats.valid {
            Some(chernoff_bound(&gate_stats, config.chernoff_mode)?)
        } else {
            None
        };

        let val_probs: Vec<Vec<f64>> = predict(&net, &features, &parts.val)?
            .into_iter()
            .map(|o| o.class_probs)
            .collect();
        let val_auc = auc_ovr(&val_probs, &val_labels).ok();

        let acquire_now = config.acquisition_frac > 0.0
            && epoch % config.acquisition_period == 0
            && !pool.unlabelled().is_empty();
        if acquire_now {
            let new = acquire(
                config,
                &net,
                &features,
                true_labels,
                &mut pool,
                &oracle,
                &gate_stats,
                score_seed,
                epoch,
                acquisition_events,
                &mut question_rng,
            )?;
            acquisitions.extend(new);
            acquisition_events += 1;
        }

        let cum_ask_rate = (!acquisitions.is_empty()).then(|| {
            acquisitions.iter().filter(|a| a.source == LabelSource::Oracle).count() as f64
                / acquisitions.len() as f64
        });
        rows.push(EpochRecord {
            epoch,
            train_loss: stats.class_loss,
            gate_loss: stats.gate_loss,
            val_auc,
            d_hellinger: gate_stats.d_hellinger,
            chernoff_bound: chernoff.map(|c| c.bound),
            beta_star: chernoff.map(|c| c.beta_star),
            cum_ask_rate,
            n_labelled: pool.labelled().len(),
            n_unlabelled: pool.unlabelled().len(),
        });
        if pool.unlabelled().is_empty() {
            break;
        }
    }

    let test_probs: Vec<Vec<f64>> = predict(&net, &features, &parts.test)?
        .into_iter()
        .map(|o| o.class_probs)
        .collect();
    let test_labels: Vec<usize> = parts.test.iter().map(|&i| true_labels[i]).collect();
    let test_auc = auc_ovr(&test_probs, &test_labels)?;

    Ok(ResultLog {
        seed,
        config_hash: config.hash(),
        rows,
        test_auc,
        acquisitions,
        class_names: dataset.class_names,
        stratified: parts.stratified,
        labelled: pool.labelled().to_vec(),
        split: parts,
    })
}

#[allow(clippy::too_many_arguments)]
fn acquire(
    config: &ExperimentConfig,
    net: &Network,
    features: &[Vec<f64>],
    true_labels: &[usize],
    pool: &mut PoolState,
    oracle: &Oracle,
    gate_stats: &GateStats,
    score_seed: u64,
    epoch: usize,
    acquisition_index: usize,
    rng: &mut RunRng,
) -> Result<Vec<AcquisitionRecord>, EngineError> {
    let candidates = pool.unlabelled().to_vec();
    let scored = score_pool(
        net,
        features,
        &candidates,
        config.acquisition,
        config.mc_samples,
        score_seed,
        epoch,
    )?;
    let mut chosen = select_top_b(&scored.scores, config.acquisition_frac);
    // Questions are asked in instance-id order.
    chosen.sort_unstable();

    let mut records = Vec::with_capacity(chosen.len());
    for k in chosen {
        let id = candidates[k];
        let gate_output = net.forward(&features[id], ForwardMode::Deterministic)?.gate;
        let ctx = QuestionContext {
            acquisition_index,
            gate_stats,
            gate_output,
            mc_mean_probs: &scored.mean_probs[k],
            params: &config.strategy_params,
        };
        let decision = decide(config.strategy, &ctx, rng, |r| oracle.label(id, true_labels[id], r))?;
        records.push(AcquisitionRecord {
            epoch,
            acquisition_index,
            instance: id,
            assigned_label: decision.assigned_label,
            source: decision.source,
            true_label: true_labels[id],
        });
    }
    for r in &records {
        pool.label(r.instance, r.assigned_label, r.source);
    }
    Ok(records)
}
