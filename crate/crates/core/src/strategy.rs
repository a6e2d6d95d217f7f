//! Oracle-questioning strategies: given an acquired instance, ask the oracle
//! or self-label with the network's prediction.

use std::str::FromStr;

use rand::{Rng, RngCore};

use crate::acquire::entropy;
use crate::gate::{decide_ask, GateStats};
use crate::net::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    NoOracle,
    EpsilonGreedy,
    EntropyResponse,
    Soqal,
    FullOracle,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::NoOracle,
        StrategyKind::EpsilonGreedy,
        StrategyKind::EntropyResponse,
        StrategyKind::Soqal,
        StrategyKind::FullOracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::NoOracle => "no-oracle",
            StrategyKind::EpsilonGreedy => "epsilon-greedy",
            StrategyKind::EntropyResponse => "entropy-response",
            StrategyKind::Soqal => "soqal",
            StrategyKind::FullOracle => "full-oracle",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy: {s}"))
    }
}

/// Thresholds and schedule constants shared by the strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    /// Hellinger trust threshold `S`.
    pub hellinger_threshold: f64,
    /// Normalised-entropy threshold for entropy response.
    pub entropy_threshold: f64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            hellinger_threshold: 0.15,
            entropy_threshold: 0.5,
            epsilon0: 1.0,
            epsilon_decay: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuestionContext<'a> {
    /// 0-based count of acquisition events before this one.
    pub acquisition_index: usize,
    pub gate_stats: &'a GateStats,
    pub gate_output: f64,
    pub mc_mean_probs: &'a [f64],
    pub params: &'a StrategyParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelSource {
    /// Part of the initial labelled pool.
    Initial,
    Oracle,
    SelfLabel,
}

impl LabelSource {
    pub fn name(&self) -> &'static str {
        match self {
            LabelSource::Initial => "initial",
            LabelSource::Oracle => "oracle",
            LabelSource::SelfLabel => "self",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelDecision {
    pub ask: bool,
    pub assigned_label: usize,
    pub source: LabelSource,
}

/// `epsilon0 * decay^n`, clamped to `[0, 1]`.
pub fn epsilon_schedule(n: usize, epsilon0: f64, decay: f64) -> f64 {
    let exp = i32::try_from(n).unwrap_or(i32::MAX);
    (epsilon0 * decay.powi(exp)).clamp(0.0, 1.0)
}

/// Whether `kind` asks the oracle in `ctx`. Only epsilon-greedy draws from
/// `rng`.
pub fn should_ask(kind: StrategyKind, ctx: &QuestionContext<'_>, rng: &mut dyn RngCore) -> bool {
    match kind {
        StrategyKind::NoOracle => false,
        StrategyKind::FullOracle => true,
        StrategyKind::EpsilonGreedy => {
            let p = epsilon_schedule(
                ctx.acquisition_index,
                ctx.params.epsilon0,
                ctx.params.epsilon_decay,
            );
            rng.random_bool(p)
        }
        StrategyKind::EntropyResponse => {
            let classes = ctx.mc_mean_probs.len() as f64;
            let normalised = if classes > 1.0 {
                entropy(ctx.mc_mean_probs) / classes.ln()
            } else {
                0.0
            };
            normalised > ctx.params.entropy_threshold
        }
        StrategyKind::Soqal => decide_ask(
            ctx.gate_output,
            ctx.gate_stats,
            ctx.params.hellinger_threshold,
        ),
    }
}

/// Decides and produces the label. `ask_oracle` is called only when the
/// strategy asks; otherwise the label is the argmax of the MC-mean posterior.
pub fn decide<E>(
    kind: StrategyKind,
    ctx: &QuestionContext<'_>,
    rng: &mut dyn RngCore,
    ask_oracle: impl FnOnce(&mut dyn RngCore) -> Result<usize, E>,
) -> Result<LabelDecision, E> {
    if should_ask(kind, ctx, rng) {
        Ok(LabelDecision {
            ask: true,
            assigned_label: ask_oracle(rng)?,
            source: LabelSource::Oracle,
        })
    } else {
        Ok(LabelDecision {
            ask: false,
            assigned_label: argmax(ctx.mc_mean_probs),
            source: LabelSource::SelfLabel,
        })
    }
}
