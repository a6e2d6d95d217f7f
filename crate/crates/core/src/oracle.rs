//! Simulated labellers, optionally noisy.

use std::str::FromStr;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::pca::Pca;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("nearest-neighbour noise requires a neighbour table")]
    MissingNeighborTable,
    #[error("instance {0} has no neighbour in the table")]
    UnknownInstance(usize),
    #[error("neighbour table needs at least two classes among its instances")]
    SingleClass,
    #[error("embedding dimension {dims} must be in 1..={features}")]
    BadEmbedDims { dims: usize, features: usize },
    #[error("flip probability {0} outside [0, 1]")]
    BadGamma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleKind {
    #[default]
    NoiseFree,
    /// Flip to a uniformly random other class.
    RandomFlip,
    /// Flip to the class of the nearest different-class instance in a
    /// principal-component subspace.
    NnFlip,
}

impl OracleKind {
    pub fn name(&self) -> &'static str {
        match self {
            OracleKind::NoiseFree => "noise-free",
            OracleKind::RandomFlip => "random-flip",
            OracleKind::NnFlip => "nn-flip",
        }
    }
}

impl FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noise-free" => Ok(OracleKind::NoiseFree),
            "random-flip" => Ok(OracleKind::RandomFlip),
            "nn-flip" => Ok(OracleKind::NnFlip),
            other => Err(format!("unknown oracle kind: {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub kind: OracleKind,
    /// Probability of a flip per label request.
    pub gamma: f64,
    pub embed_dims: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            kind: OracleKind::NoiseFree,
            gamma: 0.0,
            embed_dims: 2,
        }
    }
}

/// Nearest different-class instance for each indexed instance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    neighbors: Vec<Option<usize>>,
}

impl NeighborTable {
    /// Builds the table over the instances in `ids`, searching only among
    /// those instances. Features are projected onto the top `embed_dims`
    /// principal components of `ids`; distance ties go to the lower id.
    pub fn build(
        features: &[Vec<f64>],
        labels: &[usize],
        ids: &[usize],
        embed_dims: usize,
    ) -> Result<Self, OracleError> {
        let dim = features.first().map_or(0, Vec::len);
        if embed_dims == 0 || embed_dims > dim {
            return Err(OracleError::BadEmbedDims {
                dims: embed_dims,
                features: dim,
            });
        }
        let first = ids.first().map(|&i| labels[i]);
        if first.is_none() || ids.iter().all(|&i| Some(labels[i]) == first) {
            return Err(OracleError::SingleClass);
        }
        let rows: Vec<&[f64]> = ids.iter().map(|&i| features[i].as_slice()).collect();
        let pca = Pca::fit(&rows, embed_dims);
        let projected: Vec<Vec<f64>> = rows.iter().map(|r| pca.project(r)).collect();

        let mut sorted: Vec<usize> = (0..ids.len()).collect();
        sorted.sort_by_key(|&k| ids[k]);

        let mut neighbors = vec![None; features.len()];
        for a in 0..ids.len() {
            let mut best: Option<(f64, usize)> = None;
            for &b in &sorted {
                if labels[ids[b]] == labels[ids[a]] {
                    continue;
                }
                let d: f64 = projected[a]
                    .iter()
                    .zip(&projected[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, ids[b]));
                }
            }
            neighbors[ids[a]] = best.map(|(_, id)| id);
        }
        Ok(NeighborTable { neighbors })
    }

    pub fn neighbor(&self, id: usize) -> Option<usize> {
        self.neighbors.get(id).copied().flatten()
    }
}

/// A configured labeller for one run.
#[derive(Debug, Clone)]
pub struct Oracle {
    config: OracleConfig,
    classes: usize,
    /// `(neighbour table, class of each instance)` for nearest-neighbour noise.
    table: Option<(NeighborTable, Vec<usize>)>,
}

impl Oracle {
    pub fn new(config: OracleConfig, classes: usize) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&config.gamma) {
            return Err(OracleError::BadGamma(config.gamma));
        }
        Ok(Oracle {
            config,
            classes,
            table: None,
        })
    }

    /// Attaches the neighbour table required by [`OracleKind::NnFlip`].
    pub fn with_neighbors(mut self, table: NeighborTable, labels: Vec<usize>) -> Self {
        self.table = Some((table, labels));
        self
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// Answers a label request for `instance`. Randomness comes from `rng`; a
    /// noise-free oracle draws nothing.
    pub fn label(&self, instance: usize, true_label: usize, rng: &mut dyn RngCore) -> Result<usize, OracleError> {
        match self.config.kind {
            OracleKind::NoiseFree => Ok(true_label),
            OracleKind::RandomFlip => {
                if self.classes < 2 || !rng.random_bool(self.config.gamma) {
                    return Ok(true_label);
                }
                let k = rng.random_range(0..self.classes - 1);
                Ok(if k >= true_label { k + 1 } else { k })
            }
            OracleKind::NnFlip => {
                let (table, labels) = self.table.as_ref().ok_or(OracleError::MissingNeighborTable)?;
                let neighbor = table
                    .neighbor(instance)
                    .ok_or(OracleError::UnknownInstance(instance))?;
                if rng.random_bool(self.config.gamma) {
                    Ok(labels[neighbor])
                } else {
                    Ok(true_label)
                }
            }
        }
    }
}
