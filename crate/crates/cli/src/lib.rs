//! Command-line front end: experiment grids, sweeps and report tables.

pub mod results;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;
use walkdir::WalkDir;

use soqal_core::config::sweep_key;
use soqal_core::engine::EngineError;
use soqal_core::{run_experiment, ConfigError, ExperimentConfig, StrategyKind, VERSION};

use results::{
    acquisitions_csv, mean_std, parse_results, results_csv, summary_csv, write_atomic,
    GroupSummary, ParsedResults,
};

pub const SEED_BASE_VAR: &str = "SOQAL_SEED_BASE";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn engine_error(seed: u64, e: EngineError) -> CliError {
    match e {
        EngineError::Config(msg) => CliError::Config(msg),
        other => CliError::Runtime(format!("seed {seed}: {other}")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "soqal", version, about = "Selective oracle questioning for active learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every seed of a configuration, once per strategy.
    Run(RunArgs),
    /// Run the seed grid once per value of a parameter.
    Sweep(SweepArgs),
    /// Aggregate result files into plot-ready tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `key=value` override, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Parallel runs; defaults to min(4, available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory; defaults to the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Repeat to run several strategies side by side.
    #[arg(long = "strategy", value_name = "NAME")]
    pub strategies: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long)]
    pub values: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
}

pub fn execute(cli: Cli, seed_base: u64) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run(&args, seed_base).map(|_| ()),
        Command::Sweep(args) => sweep(&args, seed_base).map(|_| ()),
        Command::Report(args) => report(&args.input),
    }
}

/// Parses `SOQAL_SEED_BASE`; unset means 0.
pub fn seed_base_from(value: Option<&str>) -> Result<u64, CliError> {
    match value {
        None => Ok(0),
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_BASE_VAR} must be an unsigned integer, got '{v}'"))),
    }
}

fn load_config(grid: &GridArgs) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(&grid.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", grid.config.display())))?;
    let mut config = ExperimentConfig::parse(&text)?;
    for o in &grid.overrides {
        config.apply_override(o)?;
    }
    config.validate()?;
    Ok(config)
}

fn jobs(grid: &GridArgs) -> usize {
    grid.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get()).min(4)
    })
}

/// One directory of results: a configuration run over its seed list.
#[derive(Debug, Clone)]
pub struct Group {
    pub name: String,
    pub config: ExperimentConfig,
}

/// Runs every `(group, seed)` pair, writes per-seed files under
/// `out/<group>/`, then writes `out/summary.csv`.
pub fn run_groups(
    groups: &[Group],
    out: &Path,
    jobs: usize,
    seed_base: u64,
) -> Result<Vec<GroupSummary>, CliError> {
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be positive".into()));
    }
    for g in groups {
        write_atomic(&out.join(&g.name).join("config.txt"), g.config.to_text().as_bytes())?;
    }
    let tasks: Vec<(usize, u64)> = groups
        .iter()
        .enumerate()
        .flat_map(|(i, g)| g.config.seeds.iter().map(move |&s| (i, s.wrapping_add(seed_base))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let parsed: Vec<Result<ParsedResults, CliError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, seed)| {
                let g = &groups[i];
                let log = run_experiment(&g.config, seed).map_err(|e| engine_error(seed, e))?;
                let dir = out.join(&g.name);
                let path = dir.join(format!("results_{seed}.csv"));
                write_atomic(&dir.join(format!("acquisitions_{seed}.csv")), &acquisitions_csv(&log)?)?;
                write_atomic(&path, &results_csv(&log)?)?;
                Ok(parse_results(&path)?)
            })
            .collect()
    });
    let mut by_group: Vec<Vec<ParsedResults>> = vec![Vec::new(); groups.len()];
    for ((i, _), r) in tasks.iter().zip(parsed) {
        by_group[*i].push(r?);
    }
    let summaries: Vec<GroupSummary> = groups
        .iter()
        .zip(&by_group)
        .map(|(g, r)| GroupSummary::from_results(&g.name, &g.config, r))
        .collect();
    write_atomic(&out.join("summary.csv"), &summary_csv(&summaries)?)?;
    Ok(summaries)
}

pub fn run(args: &RunArgs, seed_base: u64) -> Result<Vec<GroupSummary>, CliError> {
    let config = load_config(&args.grid)?;
    let strategies: Vec<StrategyKind> = if args.strategies.is_empty() {
        vec![config.strategy]
    } else {
        args.strategies
            .iter()
            .map(|s| s.parse().map_err(CliError::Config))
            .collect::<Result<_, _>>()?
    };
    let groups: Vec<Group> = strategies
        .into_iter()
        .map(|s| {
            let mut c = config.clone();
            c.strategy = s;
            Group {
                name: s.name().to_string(),
                config: c,
            }
        })
        .collect();
    let out = args.grid.out.clone().unwrap_or_else(|| config.output.clone());
    run_groups(&groups, &out, jobs(&args.grid), seed_base)
}

pub fn sweep(args: &SweepArgs, seed_base: u64) -> Result<Vec<GroupSummary>, CliError> {
    let config = load_config(&args.grid)?;
    let key = sweep_key(&args.param)?;
    let values: Vec<&str> = args
        .values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(CliError::Config("--values lists no values".into()));
    }
    let mut groups = Vec::with_capacity(values.len());
    for v in &values {
        let mut c = config.clone();
        c.set(key, v)?;
        c.validate()?;
        groups.push(Group {
            name: format!("{}={v}", args.param),
            config: c,
        });
    }
    let out = args.grid.out.clone().unwrap_or_else(|| config.output.clone());
    let summaries = run_groups(&groups, &out, jobs(&args.grid), seed_base)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let rows = std::iter::once(
        ["param", "value", "strategy", "oracle", "test_auc_mean", "ask_rate_mean", "config_hash", "version"]
            .map(String::from),
    )
    .chain(values.iter().zip(&summaries).map(|(v, s)| {
        [
            args.param.clone(),
            v.to_string(),
            s.strategy.clone(),
            s.oracle.clone(),
            s.test_auc.0.to_string(),
            s.ask_rate.map(|a| a.0.to_string()).unwrap_or_default(),
            s.config_hash.clone(),
            VERSION.to_string(),
        ]
    }));
    for row in rows {
        w.write_record(row).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&out.join("sweep_summary.csv"), &bytes)?;
    Ok(summaries)
}

struct ReportGroup {
    strategy: String,
    oracle: String,
    gamma: String,
    results: Vec<ParsedResults>,
}

/// Writes `curves.csv` and `askrate.csv` into `dir` from every
/// `results_<seed>.csv` below it, grouped by directory.
pub fn report(dir: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Runtime(format!("{}: not a directory", dir.display())));
    }
    let mut groups: BTreeMap<String, ReportGroup> = BTreeMap::new();
    let mut files: Vec<PathBuf> = WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .map(|e| e.into_path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("results_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Runtime(format!("{}: no result files", dir.display())));
    }
    for path in files {
        let parent = path.parent().unwrap_or(dir);
        let name = match parent.strip_prefix(dir) {
            Ok(rel) if !rel.as_os_str().is_empty() => rel.display().to_string(),
            _ => ".".to_string(),
        };
        let parsed = parse_results(&path)?;
        let group = groups.entry(name).or_insert_with(|| {
            let config = fs::read_to_string(parent.join("config.txt"))
                .ok()
                .and_then(|t| ExperimentConfig::parse(&t).ok());
            ReportGroup {
                strategy: config.as_ref().map_or("unknown".into(), |c| c.strategy.name().into()),
                oracle: config.as_ref().map_or("unknown".into(), |c| c.oracle.kind.name().into()),
                gamma: config.as_ref().map_or(String::new(), |c| c.oracle.gamma.to_string()),
                results: Vec::new(),
            }
        });
        group.results.push(parsed);
    }

    let mut curves = csv::Writer::from_writer(Vec::new());
    let mut askrate = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    curves
        .write_record(["group", "strategy", "oracle", "gamma", "epoch", "val_auc_mean", "val_auc_std", "n"])
        .map_err(csv_err)?;
    askrate
        .write_record(["group", "strategy", "oracle", "gamma", "ask_rate_mean", "ask_rate_std", "n"])
        .map_err(csv_err)?;
    for (name, g) in &groups {
        let mut by_epoch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &g.results {
            for &(epoch, v) in &r.val_auc {
                by_epoch.entry(epoch).or_default().push(v);
            }
        }
        for (epoch, values) in by_epoch {
            let (m, s) = mean_std(&values).expect("non-empty");
            curves
                .write_record([
                    name.clone(),
                    g.strategy.clone(),
                    g.oracle.clone(),
                    g.gamma.clone(),
                    epoch.to_string(),
                    m.to_string(),
                    s.to_string(),
                    values.len().to_string(),
                ])
                .map_err(csv_err)?;
        }
        let rates: Vec<f64> = g.results.iter().filter_map(|r| r.ask_rate).collect();
        if let Some((m, s)) = mean_std(&rates) {
            askrate
                .write_record([
                    name.clone(),
                    g.strategy.clone(),
                    g.oracle.clone(),
                    g.gamma.clone(),
                    m.to_string(),
                    s.to_string(),
                    rates.len().to_string(),
                ])
                .map_err(csv_err)?;
        }
    }
    let into = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| CliError::Runtime(e.to_string()));
    write_atomic(&dir.join("curves.csv"), &into(curves)?)?;
    write_atomic(&dir.join("askrate.csv"), &into(askrate)?)?;
    Ok(())
}
