//! Independent reference computations used by the oracle tests and the
//! acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use soqal_core::gate::{hellinger, GateStats};
use soqal_core::net::{Batch, JointLoss, Network};
use soqal_core::rng::RunRng;

/// Composite Simpson's rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

fn pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `sqrt(1 - integral sqrt(p q))` by quadrature.
pub fn hellinger_by_quadrature(mu0: f64, var0: f64, mu1: f64, var1: f64) -> f64 {
    let spread = 14.0 * var0.max(var1).sqrt();
    let a = mu0.min(mu1) - spread;
    let b = mu0.max(mu1) + spread;
    let bc = simpson(|x| (pdf(x, mu0, var0) * pdf(x, mu1, var1)).sqrt(), a, b, 200_000);
    (1.0 - bc).max(0.0).sqrt()
}

/// Mutual information straight from its definition:
/// `-sum_c pbar_c ln pbar_c + (1/T) sum_t sum_c p_tc ln p_tc`.
pub fn bald_direct(rows: &[Vec<f64>]) -> f64 {
    let t = rows.len() as f64;
    let c = rows[0].len();
    let mut total = 0.0;
    for k in 0..c {
        let mean: f64 = rows.iter().map(|r| r[k]).sum::<f64>() / t;
        if mean > 0.0 {
            total -= mean * mean.ln();
        }
        for r in rows {
            if r[k] > 0.0 {
                total += r[k] * r[k].ln() / t;
            }
        }
    }
    total
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half.
pub fn auc_pairwise(scores: &[f64], positive: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

pub fn random_gate_stats(rng: &mut impl Rng) -> GateStats {
    let mu0 = rng.random_range(0.0..1.0);
    let mu1 = rng.random_range(0.0..1.0);
    let var0 = rng.random_range(1e-3..0.1);
    let var1 = rng.random_range(1e-3..0.1);
    let prior0 = rng.random_range(0.05..0.95);
    GateStats {
        mu0,
        var0,
        mu1,
        var1,
        prior0,
        prior1: 1.0 - prior0,
        d_hellinger: hellinger(mu0, var0, mu1, var1),
        valid: true,
    }
}

/// Monte-Carlo error of the Bayes decision rule between the two weighted
/// Gaussians, with its standard error.
pub fn bayes_error_mc(stats: &GateStats, samples: usize, rng: &mut impl Rng) -> (f64, f64) {
    let n0 = Normal::new(stats.mu0, stats.var0.sqrt()).unwrap();
    let n1 = Normal::new(stats.mu1, stats.var1.sqrt()).unwrap();
    let mut wrong = 0usize;
    for _ in 0..samples {
        let e = rng.random_bool(stats.prior1);
        let o = if e { n1.sample(rng) } else { n0.sample(rng) };
        let says_wrong = stats.prior1 * pdf(o, stats.mu1, stats.var1) > stats.prior0 * pdf(o, stats.mu0, stats.var0);
        if says_wrong != e {
            wrong += 1;
        }
    }
    let p = wrong as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// Central finite differences of `part` of the joint loss. Dropout masks are
/// replayed from `mask_seed` for every evaluation.
pub fn fd_gradient(
    net: &Network,
    batch: &Batch<'_>,
    beta: f64,
    mask_seed: u64,
    h: f64,
    part: impl Fn(&JointLoss) -> f64,
) -> Vec<f64> {
    let base = net.flat_params();
    let mut probe = net.clone();
    let mut eval = |params: &[f64]| {
        probe.set_flat_params(params);
        let mut rng = RunRng::seed_from_u64(mask_seed);
        part(&probe.loss_and_gradient(batch, beta, Some(&mut rng)).unwrap().0)
    };
    let mut grad = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + h;
        let up = eval(&params);
        params[i] = base[i] - h;
        let down = eval(&params);
        params[i] = base[i];
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Reference gradient of the joint loss. With a detached gate the trunk sees
/// only the class loss, and the gate head (the last `gate_params` entries)
/// sees the gate loss.
pub fn reference_gradient(net: &Network, batch: &Batch<'_>, beta: f64, mask_seed: u64, detached: bool, gate_params: usize) -> Vec<f64> {
    let h = 1e-5;
    if !detached {
        return fd_gradient(net, batch, beta, mask_seed, h, JointLoss::total);
    }
    let mut grad = fd_gradient(net, batch, beta, mask_seed, h, |l| l.class);
    let gate = fd_gradient(net, batch, beta, mask_seed, h, |l| l.gate);
    let start = grad.len() - gate_params;
    grad[start..].copy_from_slice(&gate[start..]);
    grad
}
