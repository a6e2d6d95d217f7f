//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use soqal_core::acquire::{bald_mcd, PosteriorSamples};
use soqal_core::gate::{chernoff_bound, hellinger, ChernoffMode, GateStats, CHERNOFF_GRID};
use soqal_core::metrics::binary_auc;
use soqal_core::net::{compute_beta, Batch, Network, NetworkConfig};
use soqal_core::oracle::OracleKind;
use soqal_core::rng::RunRng;
use soqal_core::{ask_rate, run_experiment, ExperimentConfig, ResultLog, StrategyKind};
use support::*;

const BLOBS: &str = include_str!("../../../configs/blobs.txt");
const MAX_JOBS: usize = 4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn blobs() -> ExperimentConfig {
    ExperimentConfig::parse(BLOBS).unwrap()
}

fn run_all(configs: &[ExperimentConfig]) -> Vec<Vec<ResultLog>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(MAX_JOBS).build().unwrap();
    let tasks: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let logs: Vec<ResultLog> =
        pool.install(|| tasks.par_iter().map(|&(i, s)| run_experiment(&configs[i], s).unwrap()).collect());
    let mut grouped: Vec<Vec<ResultLog>> = vec![Vec::new(); configs.len()];
    for ((i, _), log) in tasks.iter().zip(logs) {
        grouped[*i].push(log);
    }
    grouped
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_auc(logs: &[ResultLog]) -> f64 {
    mean(logs.iter().map(|l| l.test_auc))
}

fn mean_ask(logs: &[ResultLog]) -> f64 {
    mean(logs.iter().map(|l| ask_rate(l).unwrap()))
}

fn with_strategy(base: &ExperimentConfig, s: StrategyKind) -> ExperimentConfig {
    let mut c = base.clone();
    c.strategy = s;
    c
}

fn math_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = RunRng::seed_from_u64(101);
    let mut worst_h: f64 = 0.0;
    for _ in 0..50 {
        let (mu0, mu1) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let (v0, v1) = (rng.random_range(1e-3..0.1), rng.random_range(1e-3..0.1));
        worst_h = worst_h.max((hellinger(mu0, v0, mu1, v1) - hellinger_by_quadrature(mu0, v0, mu1, v1)).abs());
    }
    let mut worst_b: f64 = 0.0;
    for _ in 0..50 {
        let t = rng.random_range(1..40);
        let c = rng.random_range(2..10);
        let rows: Vec<Vec<f64>> = (0..t)
            .map(|_| {
                let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| x / s).collect()
            })
            .collect();
        let direct = bald_direct(&rows).max(0.0);
        worst_b = worst_b.max((bald_mcd(&PosteriorSamples::from_rows(rows).unwrap()) - direct).abs());
    }
    let mut worst_a: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(4..200);
        let mut positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        positive[0] = true;
        positive[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..20u8)) / 20.0).collect();
        worst_a = worst_a.max((binary_auc(&scores, &positive).unwrap() - auc_pairwise(&scores, &positive)).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst_h < 1e-6 && worst_b < 1e-9 && worst_a < 1e-12 && elapsed < Duration::from_secs(10),
        format!("max |err| hellinger {worst_h:.1e}, bald {worst_b:.1e}, auc {worst_a:.1e}; {elapsed:.2?}"),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = RunRng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for draw in 0..20 {
        let input_dim = rng.random_range(2..8);
        let hidden: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(3..9)).collect();
        let classes = rng.random_range(2..6);
        let cfg = NetworkConfig {
            input_dim,
            hidden: hidden.clone(),
            classes,
            dropout_rate: if draw % 2 == 0 { 0.0 } else { 0.3 },
            gate_detached: false,
        };
        let mut net = Network::new(&cfg, &mut rng).unwrap();
        let jittered: Vec<f64> = net.flat_params().iter().map(|p| p + rng.random_range(-0.1..0.1)).collect();
        net.set_flat_params(&jittered);
        let n = rng.random_range(2..10);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..input_dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        // At least one error so the beta weighting is exercised.
        let mut errors: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        errors[0] = true;
        let batch = Batch {
            inputs: inputs.iter().map(Vec::as_slice).collect(),
            targets: (0..n).map(|_| rng.random_range(0..classes)).collect(),
            errors,
        };
        let beta = compute_beta(&batch.errors).unwrap();
        let seed = rng.random();
        let mut masks = RunRng::seed_from_u64(seed);
        let analytic = net.loss_and_gradient(&batch, beta, Some(&mut masks)).unwrap().1.flat_params();
        let numeric = reference_gradient(&net, &batch, beta, seed, false, hidden[hidden.len() - 1] + 1);
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(30),
        format!("max relative error {worst:.1e} over 20 draws; {elapsed:.2?}"),
    )
}

fn chernoff_validity() -> Outcome {
    let start = Instant::now();
    let mut rng = RunRng::seed_from_u64(303);
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for _ in 0..50 {
        let stats = random_gate_stats(&mut rng);
        let bound = chernoff_bound(&stats, ChernoffMode::FullBound).unwrap().bound;
        let (err, se) = bayes_error_mc(&stats, 100_000, &mut rng);
        let slack = bound - (err - 3.0 * se);
        min_slack = min_slack.min(slack);
        if slack < 0.0 {
            violations += 1;
        }
    }
    let step = 1.0 / (CHERNOFF_GRID - 1) as f64;
    let symmetric = GateStats {
        mu0: 0.2,
        var0: 0.02,
        mu1: 0.7,
        var1: 0.02,
        prior0: 0.5,
        prior1: 0.5,
        d_hellinger: hellinger(0.2, 0.02, 0.7, 0.02),
        valid: true,
    };
    let beta = chernoff_bound(&symmetric, ChernoffMode::FullBound).unwrap().beta_star;
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && (beta - 0.5).abs() <= step && elapsed < Duration::from_secs(60),
        format!("{violations}/50 below MC Bayes error, min slack {min_slack:.4}; symmetric beta* {beta}; {elapsed:.2?}"),
    )
}

fn strategy_extremes() -> Outcome {
    let base = blobs();
    let full = run_experiment(&with_strategy(&base, StrategyKind::FullOracle), 0).unwrap();
    let none = run_experiment(&with_strategy(&base, StrategyKind::NoOracle), 0).unwrap();
    let mut soqal_cfg = with_strategy(&base, StrategyKind::Soqal);
    soqal_cfg.strategy_params.hellinger_threshold = 1.0;
    let soqal = run_experiment(&soqal_cfg, 0).unwrap();
    let (a_full, a_none) = (ask_rate(&full).unwrap(), ask_rate(&none).unwrap());
    let same = soqal.same_outcome(&full);
    outcome(
        a_full == 1.0 && a_none == 0.0 && same,
        format!("ask-rate full {a_full}, none {a_none}; soqal(S=1) identical to full: {same}"),
    )
}

fn ordering(logs: &[Vec<ResultLog>], elapsed: Duration) -> Outcome {
    let (full, soqal, none) = (mean_auc(&logs[0]), mean_auc(&logs[1]), mean_auc(&logs[2]));
    outcome(
        (0.85..=0.95).contains(&full)
            && full >= soqal
            && soqal >= none
            && full - none >= 0.03
            && elapsed < Duration::from_secs(300),
        format!("test AUC full {full:.4} >= soqal {soqal:.4} >= none {none:.4}, gap {:.4}; {elapsed:.2?}", full - none),
    )
}

fn ask_rate_vs_threshold(values: &[f64], logs: &[Vec<ResultLog>]) -> Outcome {
    let rates: Vec<f64> = logs.iter().map(|l| mean_ask(l)).collect();
    let monotone = rates.windows(2).all(|w| w[1] >= w[0] - 0.02);
    // A run whose gate never clears S at any acquisition must ask every time.
    let mut saturated_ok = true;
    let mut largest_never_exceeded = None;
    for (s, runs) in values.iter().zip(logs) {
        let mut all_below = true;
        for log in runs {
            let below = log
                .rows
                .iter()
                .filter(|r| log.acquisitions.iter().any(|a| a.epoch == r.epoch))
                .all(|r| r.d_hellinger < *s);
            if below && ask_rate(log).unwrap() != 1.0 {
                saturated_ok = false;
            }
            all_below &= below;
        }
        if all_below {
            largest_never_exceeded = Some(*s);
        }
    }
    let shown: Vec<String> = values.iter().zip(&rates).map(|(s, r)| format!("S={s}: {:.1}%", 100.0 * r)).collect();
    outcome(
        monotone && saturated_ok,
        format!(
            "{}; largest S never exceeded by D_H: {}",
            shown.join(", "),
            largest_never_exceeded.map_or("none in grid".to_string(), |s| s.to_string())
        ),
    )
}

fn noise_robustness(logs: &[Vec<ResultLog>]) -> Outcome {
    let (soqal, full) = (&logs[0], &logs[1]);
    let ask = mean_ask(soqal);
    let (a_soqal, a_full) = (mean_auc(soqal), mean_auc(full));
    outcome(
        ask < 0.9 && a_soqal >= a_full - 0.02,
        format!(
            "gamma 0.8: soqal ask-rate {ask:.3} ({:.0}% fewer requests), AUC soqal {a_soqal:.4} vs full {a_full:.4}",
            100.0 * (1.0 - ask)
        ),
    )
}

fn result_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for group in fs::read_dir(dir).unwrap() {
        let group = group.unwrap().path();
        if !group.is_dir() {
            continue;
        }
        let group_name = group.file_name().unwrap().to_string_lossy().to_string();
        for f in fs::read_dir(&group).unwrap() {
            let f = f.unwrap().path();
            let name = f.file_name().unwrap().to_string_lossy().to_string();
            if name.starts_with("results_") {
                out.push((format!("{group_name}/{name}"), fs::read(&f).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.txt");
    fs::write(&config, format!("{BLOBS}\nseeds = 0,1\ntraining.epochs = 20\n")).unwrap();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_soqal"))
            .args(["run", "--jobs", "2", "--strategy", "soqal", "--strategy", "epsilon-greedy", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env_remove("SOQAL_SEED_BASE")
            .status()
            .unwrap();
        assert!(status.success());
        runs.push(result_files(&out));
    }
    outcome(
        runs[0] == runs[1] && runs[0].len() == 4,
        format!("{} result files compared byte for byte", runs[0].len()),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u8, &str, Outcome)> = vec![
        (1, "math oracles", math_oracles()),
        (2, "gradient check", gradient_check()),
        (3, "chernoff validity", chernoff_validity()),
        (4, "strategy extremes", strategy_extremes()),
    ];

    let base = blobs();
    let t = Instant::now();
    let order = run_all(&[
        with_strategy(&base, StrategyKind::FullOracle),
        with_strategy(&base, StrategyKind::Soqal),
        with_strategy(&base, StrategyKind::NoOracle),
    ]);
    results.push((5, "ordering", ordering(&order, t.elapsed())));

    let thresholds = [0.1, 0.15, 0.2, 0.3, 0.4];
    let sweep: Vec<ExperimentConfig> = thresholds
        .iter()
        .map(|&s| {
            let mut c = with_strategy(&base, StrategyKind::Soqal);
            c.strategy_params.hellinger_threshold = s;
            c
        })
        .collect();
    results.push((6, "ask-rate vs S", ask_rate_vs_threshold(&thresholds, &run_all(&sweep))));

    let mut noisy = base.clone();
    noisy.oracle.kind = OracleKind::RandomFlip;
    noisy.oracle.gamma = 0.8;
    let noise = run_all(&[
        with_strategy(&noisy, StrategyKind::Soqal),
        with_strategy(&noisy, StrategyKind::FullOracle),
    ]);
    results.push((7, "noise robustness", noise_robustness(&noise)));
    results.push((8, "determinism", determinism()));

    let total = start.elapsed();
    results.push((
        9,
        "suite runtime",
        outcome(total < Duration::from_secs(15 * 60), format!("{total:.2?} with at most {MAX_JOBS} jobs")),
    ));

    for (id, name, o) in &results {
        println!("[{}] criterion {id} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
