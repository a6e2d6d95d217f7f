//! Monte-Carlo dropout posteriors and acquisition scores.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::net::{ForwardMode, NetError, Network};
use crate::rng::{derive_seed, RunRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcquireError {
    #[error("posterior samples need at least one pass")]
    NoPasses,
    #[error("pass {pass} has {got} classes, expected {expected}")]
    RaggedRow {
        pass: usize,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// `T x C` matrix of softmax outputs, one row per stochastic pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    classes: usize,
    values: Vec<f64>,
}

impl PosteriorSamples {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, AcquireError> {
        let classes = rows.first().ok_or(AcquireError::NoPasses)?.len();
        let mut values = Vec::with_capacity(rows.len() * classes);
        for (pass, row) in rows.into_iter().enumerate() {
            if row.len() != classes {
                return Err(AcquireError::RaggedRow {
                    pass,
                    expected: classes,
                    got: row.len(),
                });
            }
            values.extend(row);
        }
        Ok(PosteriorSamples { classes, values })
    }

    pub fn passes(&self) -> usize {
        self.values.len() / self.classes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.classes)
    }

    pub fn row(&self, pass: usize) -> &[f64] {
        &self.values[pass * self.classes..(pass + 1) * self.classes]
    }

    /// Row mean, the MC estimate of the predictive distribution.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.classes];
        for row in self.rows() {
            for (m, p) in mean.iter_mut().zip(row) {
                *m += p;
            }
        }
        let t = self.passes() as f64;
        mean.iter_mut().for_each(|m| *m /= t);
        mean
    }
}

/// `passes` dropout forward passes with independent masks derived from `seed`.
pub fn mc_posteriors(
    net: &Network,
    x: &[f64],
    passes: usize,
    seed: u64,
) -> Result<PosteriorSamples, AcquireError> {
    if passes == 0 {
        return Err(AcquireError::NoPasses);
    }
    let rows = (0..passes as u64)
        .map(|t| {
            net.forward(x, ForwardMode::McDropout { seed: derive_seed(seed, &[t]) })
                .map(|o| o.class_probs)
        })
        .collect::<Result<Vec<_>, _>>()?;
    PosteriorSamples::from_rows(rows)
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Mutual information between prediction and dropout mask: entropy of the
/// mean row minus mean row entropy.
pub fn bald_mcd(samples: &PosteriorSamples) -> f64 {
    let mean_entropy = samples.rows().map(entropy).sum::<f64>() / samples.passes() as f64;
    (entropy(&samples.mean()) - mean_entropy).max(0.0)
}

/// Entropy of the MC predictive distribution.
pub fn predictive_entropy(samples: &PosteriorSamples) -> f64 {
    entropy(&samples.mean())
}

/// Indices of the `ceil(b_frac * n)` highest scores, ties to the lower index.
/// A non-positive fraction selects nothing.
pub fn select_top_b(scores: &[f64], b_frac: f64) -> Vec<usize> {
    if scores.is_empty() || b_frac <= 0.0 {
        return Vec::new();
    }
    let count = ((b_frac * scores.len() as f64).ceil() as usize).min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AcquisitionKind {
    #[default]
    BaldMcd,
    Entropy,
    Random,
}

impl AcquisitionKind {
    pub fn name(&self) -> &'static str {
        match self {
            AcquisitionKind::BaldMcd => "bald-mcd",
            AcquisitionKind::Entropy => "entropy",
            AcquisitionKind::Random => "random",
        }
    }
}

impl FromStr for AcquisitionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bald-mcd" => Ok(AcquisitionKind::BaldMcd),
            "entropy" => Ok(AcquisitionKind::Entropy),
            "random" => Ok(AcquisitionKind::Random),
            other => Err(format!("unknown acquisition function: {other}")),
        }
    }
}

/// Scores and MC-mean posteriors for a set of unlabelled instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPool {
    pub scores: Vec<f64>,
    pub mean_probs: Vec<Vec<f64>>,
}

/// Scores every instance in `ids`. Mask seeds are derived from
/// `(seed, instance id, epoch)`, so the result does not depend on pool order.
pub fn score_pool(
    net: &Network,
    features: &[Vec<f64>],
    ids: &[usize],
    kind: AcquisitionKind,
    passes: usize,
    seed: u64,
    epoch: usize,
) -> Result<ScoredPool, AcquireError> {
    let mut scores = Vec::with_capacity(ids.len());
    let mut mean_probs = Vec::with_capacity(ids.len());
    for &id in ids {
        let instance_seed = derive_seed(seed, &[id as u64, epoch as u64]);
        let samples = mc_posteriors(net, &features[id], passes, instance_seed)?;
        let score = match kind {
            AcquisitionKind::BaldMcd => bald_mcd(&samples),
            AcquisitionKind::Entropy => predictive_entropy(&samples),
            AcquisitionKind::Random => {
                RunRng::seed_from_u64(derive_seed(instance_seed, &[u64::MAX])).random::<f64>()
            }
        };
        scores.push(score);
        mean_probs.push(samples.mean());
    }
    Ok(ScoredPool { scores, mean_probs })
}
