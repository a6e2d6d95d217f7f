//! Datasets: synthesis, CSV ingestion, stratified splits and z-scoring.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::RunRng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: file is empty")]
    Empty { path: String },
    #[error("{path}: no column named '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("{path}: no feature columns")]
    NoFeatures { path: String },
    #[error("{path}: line {line}, column '{column}': cannot parse '{value}' as a number")]
    NonNumeric {
        path: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: line {line}, column '{column}': non-finite value '{value}'")]
    NonFinite {
        path: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: String,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn dims(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Writes a header row of feature names followed by `label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.feature_names.clone();
        header.push("label".to_string());
        w.write_record(&header)?;
        for (row, &label) in self.features.iter().zip(&self.labels) {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            record.push(self.class_names[label].clone());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Isotropic unit Gaussians at the vertices of a regular simplex.
    GaussianBlobs,
    /// A central blob (class 0) surrounded by concentric noisy rings.
    RingVsBlob,
    /// Sine-shaped bands offset vertically per class.
    NoisySineClasses,
}

impl SyntheticKind {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::GaussianBlobs => "gaussian-blobs",
            SyntheticKind::RingVsBlob => "ring-vs-blob",
            SyntheticKind::NoisySineClasses => "noisy-sine-classes",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian-blobs" => Ok(SyntheticKind::GaussianBlobs),
            "ring-vs-blob" => Ok(SyntheticKind::RingVsBlob),
            "noisy-sine-classes" => Ok(SyntheticKind::NoisySineClasses),
            other => Err(format!("unknown synthetic dataset: {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub classes: usize,
    pub dims: usize,
    /// Pairwise centre distance for blobs, ring spacing, or band offset.
    pub separation: f64,
}

/// Generates a labelled dataset; instance `i` has class `i mod classes`.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset, DataError> {
    let SyntheticSpec {
        kind,
        n,
        classes,
        dims,
        separation,
    } = *spec;
    if classes < 2 {
        return Err(DataError::InvalidArgument("at least two classes required".into()));
    }
    if n < 10 * classes {
        return Err(DataError::InvalidArgument(format!(
            "n = {n} is below 10 x classes = {}",
            10 * classes
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(DataError::InvalidArgument(format!("separation {separation} must be finite and >= 0")));
    }
    let min_dims = match kind {
        SyntheticKind::GaussianBlobs => classes,
        SyntheticKind::RingVsBlob | SyntheticKind::NoisySineClasses => 2,
    };
    if dims < min_dims {
        return Err(DataError::InvalidArgument(format!(
            "{} needs at least {min_dims} dimensions, got {dims}",
            kind.name()
        )));
    }

    let mut rng = RunRng::seed_from_u64(seed);
    let gauss = move |rng: &mut RunRng| -> f64 { StandardNormal.sample(rng) };
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        let mut x: Vec<f64> = (0..dims).map(|_| gauss(&mut rng)).collect();
        match kind {
            SyntheticKind::GaussianBlobs => {
                x[c] += separation / std::f64::consts::SQRT_2;
            }
            SyntheticKind::RingVsBlob => {
                if c > 0 {
                    let angle = rng.random_range(0.0..std::f64::consts::TAU);
                    let radius = c as f64 * separation + 0.5 * gauss(&mut rng);
                    x[0] = radius * angle.cos();
                    x[1] = radius * angle.sin();
                }
            }
            SyntheticKind::NoisySineClasses => {
                let t = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                x[0] = t;
                x[1] = t.sin() + c as f64 * separation + 0.3 * gauss(&mut rng);
            }
        }
        features.push(x);
        labels.push(c);
    }
    Ok(Dataset {
        features,
        labels,
        class_names: (0..classes).map(|c| c.to_string()).collect(),
        feature_names: (0..dims).map(|d| format!("x{d}")).collect(),
    })
}

/// Reads a CSV with a header row. `label_column` holds class names, mapped to
/// indices in order of first appearance; every other column must be numeric.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset, DataError> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: name.clone(),
        source,
    })?;
    read_csv(file, &name, label_column)
}

pub fn read_csv<R: Read>(reader: R, name: &str, label_column: &str) -> Result<Dataset, DataError> {
    let csv_err = |source| DataError::Csv {
        path: name.to_string(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::Empty { path: name.to_string() });
    }
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| DataError::MissingColumn {
            path: name.to_string(),
            column: label_column.to_string(),
        })?;
    if headers.len() < 2 {
        return Err(DataError::NoFeatures { path: name.to_string() });
    }
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(DataError::RaggedRow {
                path: name.to_string(),
                line,
                expected: headers.len(),
                found: record.len(),
            });
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (i, cell) in record.iter().enumerate() {
            if i == label_idx {
                continue;
            }
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                path: name.to_string(),
                line,
                column: headers[i].to_string(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite {
                    path: name.to_string(),
                    line,
                    column: headers[i].to_string(),
                    value: cell.to_string(),
                });
            }
            row.push(value);
        }
        let label = record[label_idx].trim().to_string();
        let next = class_names.len();
        let idx = *class_index.entry(label.clone()).or_insert_with(|| {
            class_names.push(label);
            next
        });
        features.push(row);
        labels.push(idx);
    }
    if labels.is_empty() {
        return Err(DataError::Empty { path: name.to_string() });
    }
    Ok(Dataset {
        features,
        labels,
        class_names,
        feature_names,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

/// Disjoint, sorted index sets covering a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Subset of `train` that starts labelled.
    pub initial_labelled: Vec<usize>,
    /// False when some class was too small to stratify.
    pub stratified: bool,
}

/// Splits `labels` into train/val/test and picks the initial labelled subset
/// of train. Each class is spread across the parts in proportion to the part
/// sizes, within one instance.
pub fn split(
    labels: &[usize],
    classes: usize,
    fractions: SplitFractions,
    init_labelled_frac: f64,
    seed: u64,
) -> Result<Split, DataError> {
    let SplitFractions { train, val, test } = fractions;
    if [train, val, test].iter().any(|f| f.is_nan() || *f <= 0.0) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidArgument(format!(
            "split fractions ({train}, {val}, {test}) must be positive and sum to 1"
        )));
    }
    if !(init_labelled_frac > 0.0 && init_labelled_frac <= 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "initial labelled fraction {init_labelled_frac} outside (0, 1]"
        )));
    }
    let n = labels.len();
    let n_val = (n as f64 * val).round() as usize;
    let n_test = (n as f64 * test).round() as usize;
    if n_val + n_test >= n {
        return Err(DataError::InvalidArgument(format!("{n} instances are too few to split")));
    }
    let sizes = [n - n_val - n_test, n_val, n_test];

    let mut rng = RunRng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for ids in &mut by_class {
        ids.shuffle(&mut rng);
    }
    let stratified = by_class.iter().all(|ids| ids.len() >= sizes.len());

    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut labelled = Vec::new();
    if stratified {
        let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let alloc = controlled_rounding(&counts, &sizes);
        let mut train_by_class = Vec::with_capacity(classes);
        for (ids, row) in by_class.iter().zip(&alloc) {
            let mut start = 0;
            for (part, &take) in parts.iter_mut().zip(row) {
                part.extend_from_slice(&ids[start..start + take]);
                start += take;
            }
            train_by_class.push(ids[..row[0]].to_vec());
        }
        let n_lab = initial_count(sizes[0], init_labelled_frac);
        let train_counts: Vec<usize> = train_by_class.iter().map(Vec::len).collect();
        let lab_alloc = controlled_rounding(&train_counts, &[n_lab, sizes[0] - n_lab]);
        for (ids, row) in train_by_class.iter().zip(&lab_alloc) {
            labelled.extend_from_slice(&ids[..row[0]]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let mut start = 0;
        for (part, &take) in parts.iter_mut().zip(&sizes) {
            part.extend_from_slice(&all[start..start + take]);
            start += take;
        }
        let n_lab = initial_count(sizes[0], init_labelled_frac);
        labelled.extend_from_slice(&parts[0][..n_lab]);
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    labelled.sort_unstable();
    let [train, val, test] = parts;
    Ok(Split {
        train,
        val,
        test,
        initial_labelled: labelled,
        stratified,
    })
}

fn initial_count(n_train: usize, frac: f64) -> usize {
    ((n_train as f64 * frac).round() as usize).clamp(1, n_train)
}

/// Integer matrix with row sums `rows`, column sums `cols` (equal totals) and
/// every cell within one of `rows[r] * cols[c] / total`.
///
/// Cells start at the floor of their quota; the leftover units are routed by
/// augmenting paths through a unit-capacity bipartite graph.
fn controlled_rounding(rows: &[usize], cols: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = rows.iter().sum();
    debug_assert_eq!(total, cols.iter().sum::<usize>());
    let mut alloc: Vec<Vec<usize>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| r * c / total.max(1)).collect())
        .collect();
    let remainder = |r: usize, c: usize| (rows[r] * cols[c]) % total.max(1);
    let mut row_need: Vec<usize> = rows
        .iter()
        .zip(&alloc)
        .map(|(&r, a)| r - a.iter().sum::<usize>())
        .collect();
    let mut col_need: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(c, &n)| n - alloc.iter().map(|a| a[c]).sum::<usize>())
        .collect();
    // bumped[r][c] marks a cell that already received its extra unit.
    let mut bumped = vec![vec![false; cols.len()]; rows.len()];

    fn augment(
        r: usize,
        bumped: &mut [Vec<bool>],
        col_need: &mut [usize],
        seen: &mut [bool],
        pref: &[Vec<usize>],
    ) -> bool {
        for &c in &pref[r] {
            if bumped[r][c] || seen[c] {
                continue;
            }
            seen[c] = true;
            if col_need[c] > 0 {
                col_need[c] -= 1;
                bumped[r][c] = true;
                return true;
            }
            // Reroute a row that holds column c's extra unit elsewhere.
            for other in 0..bumped.len() {
                if other != r && bumped[other][c] {
                    bumped[other][c] = false;
                    if augment(other, bumped, col_need, seen, pref) {
                        bumped[r][c] = true;
                        return true;
                    }
                    bumped[other][c] = true;
                }
            }
        }
        false
    }

    let pref: Vec<Vec<usize>> = (0..rows.len())
        .map(|r| {
            // Only cells with a fractional quota may take the extra unit.
            let mut order: Vec<usize> = (0..cols.len()).filter(|&c| remainder(r, c) > 0).collect();
            order.sort_by(|&a, &b| remainder(r, b).cmp(&remainder(r, a)).then(a.cmp(&b)));
            order
        })
        .collect();
    for r in 0..rows.len() {
        while row_need[r] > 0 {
            let mut seen = vec![false; cols.len()];
            let ok = augment(r, &mut bumped, &mut col_need, &mut seen, &pref);
            assert!(ok, "controlled rounding always exists for consistent margins");
            row_need[r] -= 1;
        }
    }
    for (a, b) in alloc.iter_mut().zip(&bumped) {
        for (cell, &extra) in a.iter_mut().zip(b) {
            *cell += usize::from(extra);
        }
    }
    alloc
}

/// Per-feature z-scoring with statistics from a fitting subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on `features[ids]`. Zero-variance features get unit scale.
    pub fn fit(features: &[Vec<f64>], ids: &[usize]) -> Self {
        let dims = features.first().map_or(0, Vec::len);
        let n = ids.len().max(1) as f64;
        let mut mean = vec![0.0; dims];
        for &i in ids {
            for (m, x) in mean.iter_mut().zip(&features[i]) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dims];
        for &i in ids {
            for ((v, x), m) in var.iter_mut().zip(&features[i]).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.std)
                    .map(|((x, m), s)| (x - m) / s)
                    .collect()
            })
            .collect()
    }
}
