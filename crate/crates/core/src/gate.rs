//! Decision rule for the oracle-selection gate.
//!
//! At the end of every training epoch the gate outputs `o` on the labelled
//! pool are split by the class head's zero-one loss `e` and each half is fit
//! with a univariate Gaussian. The Hellinger distance between the two fits
//! measures how far the gate can be trusted; below a threshold `S` every
//! acquired instance goes to the oracle, otherwise the instance goes to the
//! oracle only when its `o` is more likely under the `e = 1` component.

use std::f64::consts::PI;

use thiserror::Error;

/// Lower bound applied to fitted variances.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Number of grid points used to search the Chernoff exponent on `[0, 1]`.
pub const CHERNOFF_GRID: usize = 1001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("{outputs} gate outputs but {flags} error flags")]
    LengthMismatch { outputs: usize, flags: usize },
    #[error("gate statistics are not ready: each error class needs at least two samples")]
    NotReady,
}

/// Gaussian fits of the gate output conditioned on the zero-one loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateStats {
    pub mu0: f64,
    pub var0: f64,
    pub mu1: f64,
    pub var1: f64,
    pub prior0: f64,
    pub prior1: f64,
    pub d_hellinger: f64,
    /// Both error classes had at least two samples.
    pub valid: bool,
}

impl GateStats {
    /// Statistics that force every decision to the oracle.
    pub fn not_ready() -> Self {
        GateStats {
            mu0: 0.0,
            var0: VARIANCE_FLOOR,
            mu1: 0.0,
            var1: VARIANCE_FLOOR,
            prior0: 0.5,
            prior1: 0.5,
            d_hellinger: 0.0,
            valid: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffResult {
    pub bound: f64,
    pub beta_star: f64,
}

/// How the Chernoff exponent parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChernoffMode {
    /// Minimise the whole bound, prior factor included.
    #[default]
    FullBound,
    /// Maximise only the Gaussian exponent `k(beta)`, ignoring the priors.
    ExponentOnly,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.max(VARIANCE_FLOOR))
}

/// Fits `o | e = 0` and `o | e = 1` with population mean and variance.
pub fn fit_conditional_gaussians(outputs: &[f64], errors: &[bool]) -> Result<GateStats, GateError> {
    if outputs.len() != errors.len() {
        return Err(GateError::LengthMismatch {
            outputs: outputs.len(),
            flags: errors.len(),
        });
    }
    let pick = |want: bool| -> Vec<f64> {
        outputs.iter().zip(errors).filter(|&(_, &e)| e == want).map(|(&o, _)| o).collect()
    };
    let (right, wrong) = (pick(false), pick(true));
    if right.len() < 2 || wrong.len() < 2 {
        let mut stats = GateStats::not_ready();
        if !outputs.is_empty() {
            stats.prior0 = right.len() as f64 / outputs.len() as f64;
            stats.prior1 = 1.0 - stats.prior0;
        }
        if !right.is_empty() {
            (stats.mu0, stats.var0) = mean_var(&right);
        }
        if !wrong.is_empty() {
            (stats.mu1, stats.var1) = mean_var(&wrong);
        }
        return Ok(stats);
    }
    let (mu0, var0) = mean_var(&right);
    let (mu1, var1) = mean_var(&wrong);
    let prior0 = right.len() as f64 / outputs.len() as f64;
    Ok(GateStats {
        mu0,
        var0,
        mu1,
        var1,
        prior0,
        prior1: 1.0 - prior0,
        d_hellinger: hellinger(mu0, var0, mu1, var1),
        valid: true,
    })
}

/// Hellinger distance between `N(mu0, var0)` and `N(mu1, var1)`.
///
/// `H^2 = 1 - sqrt(2 s0 s1 / (s0^2 + s1^2)) * exp(-(mu0 - mu1)^2 / (4 (s0^2 + s1^2)))`
pub fn hellinger(mu0: f64, var0: f64, mu1: f64, var1: f64) -> f64 {
    let sum = var0 + var1;
    let coeff = (2.0 * (var0 * var1).sqrt() / sum).sqrt();
    let diff = mu0 - mu1;
    let bc = coeff * (-diff * diff / (4.0 * sum)).exp();
    (1.0 - bc).clamp(0.0, 1.0).sqrt()
}

/// Log-density of `N(mean, var)` at `x`.
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

/// `true` means ask the oracle, `false` means self-label.
pub fn decide_ask(gate_output: f64, stats: &GateStats, threshold: f64) -> bool {
    if !stats.valid || stats.d_hellinger < threshold {
        return true;
    }
    log_normal_pdf(gate_output, stats.mu1, stats.var1)
        > log_normal_pdf(gate_output, stats.mu0, stats.var0)
}

/// Gaussian part of the Chernoff exponent, `k(beta)`.
pub fn chernoff_exponent(stats: &GateStats, beta: f64) -> f64 {
    let mixed = beta * stats.var0 + (1.0 - beta) * stats.var1;
    let diff = stats.mu0 - stats.mu1;
    beta * (1.0 - beta) * diff * diff / (2.0 * mixed)
        + 0.5 * (mixed.ln() - beta * stats.var0.ln() - (1.0 - beta) * stats.var1.ln())
}

/// `P(e=0)^(1-beta) * P(e=1)^beta * exp(-k(beta))`.
///
/// `exp(-k(beta))` is the integral of `p0^(1-beta) p1^beta`, so the priors
/// take the same exponents; pairing them the other way round is not a bound
/// when the variances differ.
pub fn chernoff_bound_at(stats: &GateStats, beta: f64) -> f64 {
    log_chernoff_bound_at(stats, beta).exp()
}

fn log_chernoff_bound_at(stats: &GateStats, beta: f64) -> f64 {
    (1.0 - beta) * stats.prior0.ln() + beta * stats.prior1.ln() - chernoff_exponent(stats, beta)
}

/// Chernoff upper bound on the gate's decision error.
///
/// `beta*` is found on a uniform grid of [`CHERNOFF_GRID`] points. Values
/// equal within `1e-12` (relative, on the log scale) count as ties and
/// resolve toward 0.5.
pub fn chernoff_bound(stats: &GateStats, mode: ChernoffMode) -> Result<ChernoffResult, GateError> {
    if !stats.valid {
        return Err(GateError::NotReady);
    }
    // Both modes minimise a log-scale objective over the grid.
    let objective = |beta: f64| match mode {
        ChernoffMode::FullBound => log_chernoff_bound_at(stats, beta),
        ChernoffMode::ExponentOnly => -chernoff_exponent(stats, beta),
    };
    let steps = (CHERNOFF_GRID - 1) as f64;
    let mut best_beta = 0.5;
    let mut best = objective(0.5);
    for i in 0..CHERNOFF_GRID {
        let beta = i as f64 / steps;
        let value = objective(beta);
        let tol = 1e-12 * value.abs().max(best.abs()).max(1.0);
        let better = value < best - tol
            || ((value - best).abs() <= tol && (beta - 0.5).abs() < (best_beta - 0.5_f64).abs());
        if better {
            best = value;
            best_beta = beta;
        }
    }
    Ok(ChernoffResult {
        bound: chernoff_bound_at(stats, best_beta),
        beta_star: best_beta,
    })
}
