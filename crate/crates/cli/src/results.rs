//! Per-seed result files and the summaries built from them.

use std::fs;
use std::io;
use std::path::Path;

use soqal_core::config::ExperimentConfig;
use soqal_core::engine::ResultLog;
use soqal_core::{ask_rate, VERSION};

pub const RESULTS_HEADER: [&str; 15] = [
    "seed",
    "epoch",
    "train_loss",
    "gate_loss",
    "val_auc",
    "d_hellinger",
    "chernoff_bound",
    "beta_star",
    "cum_ask_rate",
    "n_labelled",
    "n_unlabelled",
    "test_auc",
    "stratified",
    "config_hash",
    "version",
];

pub const ACQUISITIONS_HEADER: [&str; 11] = [
    "seed",
    "epoch",
    "acquisition_index",
    "instance",
    "source",
    "assigned_label",
    "assigned_class",
    "true_label",
    "true_class",
    "config_hash",
    "version",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn to_bytes<F>(write: F) -> io::Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w).map_err(io::Error::other)?;
        w.flush()?;
    }
    Ok(buf)
}

/// One row per epoch followed by a `final` row carrying the test AUC and the
/// overall ask-rate.
pub fn results_csv(log: &ResultLog) -> io::Result<Vec<u8>> {
    let seed = log.seed.to_string();
    let stratified = log.stratified.to_string();
    to_bytes(|w| {
        w.write_record(RESULTS_HEADER)?;
        for r in &log.rows {
            w.write_record([
                seed.clone(),
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.gate_loss.to_string(),
                opt(r.val_auc),
                r.d_hellinger.to_string(),
                opt(r.chernoff_bound),
                opt(r.beta_star),
                opt(r.cum_ask_rate),
                r.n_labelled.to_string(),
                r.n_unlabelled.to_string(),
                String::new(),
                stratified.clone(),
                log.config_hash.clone(),
                VERSION.to_string(),
            ])?;
        }
        let last = log.rows.last();
        w.write_record([
            seed.clone(),
            "final".to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            opt(ask_rate(log).ok()),
            last.map(|r| r.n_labelled.to_string()).unwrap_or_default(),
            last.map(|r| r.n_unlabelled.to_string()).unwrap_or_default(),
            log.test_auc.to_string(),
            stratified.clone(),
            log.config_hash.clone(),
            VERSION.to_string(),
        ])
    })
}

/// Label provenance of every acquired instance.
pub fn acquisitions_csv(log: &ResultLog) -> io::Result<Vec<u8>> {
    let class = |k: usize| log.class_names.get(k).cloned().unwrap_or_else(|| k.to_string());
    to_bytes(|w| {
        w.write_record(ACQUISITIONS_HEADER)?;
        for a in &log.acquisitions {
            w.write_record([
                log.seed.to_string(),
                a.epoch.to_string(),
                a.acquisition_index.to_string(),
                a.instance.to_string(),
                a.source.name().to_string(),
                a.assigned_label.to_string(),
                class(a.assigned_label),
                a.true_label.to_string(),
                class(a.true_label),
                log.config_hash.clone(),
                VERSION.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Writes through a temporary sibling and renames, so a crash never leaves a
/// truncated file in place of a finished one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::other(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// The parts of a results file that summaries and reports need.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResults {
    pub seed: u64,
    /// `(epoch, val_auc)` for epochs with a defined validation AUC.
    pub val_auc: Vec<(usize, f64)>,
    pub test_auc: f64,
    pub ask_rate: Option<f64>,
    pub config_hash: String,
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("{}: {msg}", path.display()))
}

pub fn parse_results(path: &Path) -> io::Result<ParsedResults> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(path, e))?;
    let headers = reader.headers().map_err(|e| bad(path, e))?.clone();
    if headers.iter().ne(RESULTS_HEADER) {
        return Err(bad(path, "unexpected header"));
    }
    let float = |s: &str| -> io::Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(path, format!("bad number '{s}'")))
        }
    };
    let mut val_auc = Vec::new();
    let mut fin = None;
    let mut seed = None;
    let mut config_hash = String::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(path, e))?;
        seed = Some(record[0].parse::<u64>().map_err(|_| bad(path, "bad seed"))?);
        config_hash = record[13].to_string();
        if &record[1] == "final" {
            let test = float(&record[11])?.ok_or_else(|| bad(path, "final row without test_auc"))?;
            fin = Some((test, float(&record[8])?));
        } else {
            let epoch = record[1].parse().map_err(|_| bad(path, "bad epoch"))?;
            if let Some(v) = float(&record[4])? {
                val_auc.push((epoch, v));
            }
        }
    }
    let (test_auc, ask_rate) = fin.ok_or_else(|| bad(path, "missing final row"))?;
    Ok(ParsedResults {
        seed: seed.ok_or_else(|| bad(path, "no rows"))?,
        val_auc,
        test_auc,
        ask_rate,
        config_hash,
    })
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Seed-aggregated outcome of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: String,
    pub strategy: String,
    pub oracle: String,
    pub gamma: f64,
    pub seeds: Vec<u64>,
    pub test_auc: (f64, f64),
    pub ask_rate: Option<(f64, f64)>,
    pub config_hash: String,
}

impl GroupSummary {
    pub fn from_results(group: &str, config: &ExperimentConfig, results: &[ParsedResults]) -> Self {
        let aucs: Vec<f64> = results.iter().map(|r| r.test_auc).collect();
        let rates: Vec<f64> = results.iter().filter_map(|r| r.ask_rate).collect();
        GroupSummary {
            group: group.to_string(),
            strategy: config.strategy.name().to_string(),
            oracle: config.oracle.kind.name().to_string(),
            gamma: config.oracle.gamma,
            seeds: results.iter().map(|r| r.seed).collect(),
            test_auc: mean_std(&aucs).unwrap_or((f64::NAN, f64::NAN)),
            // Undefined unless every seed acquired something.
            ask_rate: if rates.len() == results.len() { mean_std(&rates) } else { None },
            config_hash: config.hash(),
        }
    }
}

pub fn summary_csv(groups: &[GroupSummary]) -> io::Result<Vec<u8>> {
    to_bytes(|w| {
        w.write_record([
            "group",
            "strategy",
            "oracle",
            "gamma",
            "seeds",
            "test_auc_mean",
            "test_auc_std",
            "ask_rate_mean",
            "ask_rate_std",
            "config_hash",
            "version",
        ])?;
        for g in groups {
            let seeds: Vec<String> = g.seeds.iter().map(u64::to_string).collect();
            w.write_record([
                g.group.clone(),
                g.strategy.clone(),
                g.oracle.clone(),
                g.gamma.to_string(),
                seeds.join(" "),
                g.test_auc.0.to_string(),
                g.test_auc.1.to_string(),
                opt(g.ask_rate.map(|a| a.0)),
                opt(g.ask_rate.map(|a| a.1)),
                g.config_hash.clone(),
                VERSION.to_string(),
            ])?;
        }
        Ok(())
    })
}
