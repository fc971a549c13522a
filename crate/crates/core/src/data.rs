//! Tabular dataset ingestion, splitting and synthesis.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed CSV near line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("column `{0}` not found in header")]
    UnknownColumn(String),
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("no usable feature columns")]
    NoFeatures,
    #[error("positive label `{0}` does not occur in the label column")]
    UnknownPositiveLabel(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("feature mask has length {got}, dataset has {expected} features")]
    MaskLength { expected: usize, got: usize },
    #[error("feature mask selects no features")]
    EmptyMask,
    #[error("unknown bundled dataset `{0}` (available: {1})")]
    UnknownBundled(String, String),
    #[error("invalid synthetic spec: {0}")]
    Synthetic(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Standardized feature matrix, one row per sample.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    /// `(mean, std)` used to standardize each kept column.
    pub standardization: Vec<(f64, f64)>,
    /// Columns known to carry signal (synthetic data only).
    pub informative: Option<Vec<usize>>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Column handling for [`load_csv`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    /// Empty means the last column.
    pub label_column: String,
    /// Columns to one-hot encode even if every value parses as a number.
    /// Columns containing any non-numeric value are always treated as
    /// categorical.
    pub categorical: Vec<String>,
    pub drop_columns: Vec<String>,
    /// Binary only: the label value mapped to class 1. By default the
    /// greater value (numerically if all labels are numbers) is positive.
    pub positive_label: Option<String>,
}

impl CsvSchema {
    pub fn new(label_column: &str) -> Self {
        Self { label_column: label_column.to_string(), ..Default::default() }
    }
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "?" || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn sort_labels(values: &mut [String]) {
    let numeric: Option<Vec<f64>> = values.iter().map(|v| v.trim().parse::<f64>().ok()).collect();
    if numeric.is_some() {
        values.sort_by(|a, b| a.trim().parse::<f64>().unwrap().total_cmp(&b.trim().parse::<f64>().unwrap()));
    } else {
        values.sort();
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let csv_err = |e: csv::Error| DataError::Csv { line: e.position().map(|p| p.line()).unwrap_or(0), msg: e.to_string() };
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let label_idx = if schema.label_column.is_empty() {
        header.len().checked_sub(1).ok_or_else(|| DataError::MissingLabelColumn(String::new()))?
    } else {
        header
            .iter()
            .position(|h| *h == schema.label_column)
            .ok_or_else(|| DataError::MissingLabelColumn(schema.label_column.clone()))?
    };
    for c in schema.categorical.iter().chain(&schema.drop_columns) {
        if !header.contains(c) {
            return Err(DataError::UnknownColumn(c.clone()));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if is_missing(&rec[label_idx]) {
            dropped += 1;
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with a missing label");
    }

    let mut classes: Vec<String> =
        rows.iter().map(|r| r[label_idx].clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(DataError::TooFewClasses(classes.len()));
    }
    sort_labels(&mut classes);
    if let Some(pos) = &schema.positive_label {
        let i = classes.iter().position(|c| c == pos).ok_or_else(|| DataError::UnknownPositiveLabel(pos.clone()))?;
        let c = classes.remove(i);
        classes.push(c);
    }
    let class_index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let labels: Vec<usize> = rows.iter().map(|r| class_index[r[label_idx].as_str()]).collect();

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if j == label_idx || schema.drop_columns.contains(name) {
            continue;
        }
        let raw: Vec<&str> = rows.iter().map(|r| r[j].as_str()).collect();
        let present: Vec<&str> = raw.iter().copied().filter(|s| !is_missing(s)).collect();
        if present.is_empty() {
            log::warn!("column `{name}` has no values; dropped");
            continue;
        }
        let categorical = schema.categorical.contains(name) || present.iter().any(|s| s.parse::<f64>().is_err());
        if categorical {
            let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
            for s in &present {
                *freq.entry(s).or_default() += 1;
            }
            // Most frequent level, ties to the lexicographically smallest.
            let mode = freq.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(k, _)| *k).unwrap();
            for level in freq.keys() {
                columns.push(
                    raw.iter().map(|s| if *(if is_missing(s) { &mode } else { s }) == *level { 1.0 } else { 0.0 }).collect(),
                );
                names.push(format!("{name}={level}"));
            }
        } else {
            let mut vals: Vec<f64> = present.iter().map(|s| s.parse::<f64>().unwrap()).collect();
            let fill = median(&mut vals);
            columns.push(raw.iter().map(|s| if is_missing(s) { fill } else { s.parse::<f64>().unwrap() }).collect());
            names.push(name.clone());
        }
    }
    finish(columns, names, labels, classes, None)
}

/// Drops constant columns, standardizes the rest and assembles the dataset.
fn finish(
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    informative: Option<Vec<usize>>,
) -> Result<Dataset, DataError> {
    let n = labels.len();
    let mut kept = Vec::new();
    let mut kept_names = Vec::new();
    let mut stats = Vec::new();
    let mut remap = Vec::new();
    for (col, name) in columns.into_iter().zip(names) {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if !(std > 1e-12) {
            log::warn!("column `{name}` is constant; dropped");
            remap.push(None);
            continue;
        }
        remap.push(Some(kept.len()));
        kept.push(col.iter().map(|x| (x - mean) / std).collect::<Vec<f64>>());
        kept_names.push(name);
        stats.push((mean, std));
    }
    if kept.is_empty() {
        return Err(DataError::NoFeatures);
    }
    let d = kept.len();
    let features = Array2::from_shape_fn((n, d), |(i, j)| kept[j][i]);
    let informative = informative.map(|inf| inf.iter().filter_map(|&j| remap[j]).collect());
    Ok(Dataset {
        features,
        labels,
        k: class_names.len(),
        feature_names: kept_names,
        class_names,
        standardization: stats,
        informative,
    })
}

pub const BUNDLED: [&str; 2] = ["pima", "cleveland"];

/// Small datasets shipped inside the binary.
pub fn bundled(name: &str) -> Result<Dataset, DataError> {
    let (text, schema) = match name {
        "pima" => (include_str!("../data/pima.csv"), CsvSchema::new("type")),
        "cleveland" => (include_str!("../data/cleveland.csv"), CsvSchema::new("diameter_narrowing")),
        other => return Err(DataError::UnknownBundled(other.to_string(), BUNDLED.join(", "))),
    };
    load_csv_reader(text.as_bytes(), &schema)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_frac: 0.6, val_frac: 0.2, test_frac: 0.2, stratified: true, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let f = [self.train_frac, self.val_frac, self.test_frac];
        if f.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(DataError::Split("fractions must be positive".into()));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Split("fractions must sum to 1".into()));
        }
        Ok(())
    }
}

/// A subset of rows, materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    /// Row indices into the source dataset, ascending.
    pub indices: Vec<usize>,
}

impl Partition {
    fn gather(ds: &Dataset, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        Self {
            features: ds.features.select(Axis(0), &indices),
            labels: indices.iter().map(|&i| ds.labels[i]).collect(),
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keeps the columns whose mask bit is set.
    pub fn masked(&self, mask: &[bool]) -> Result<Partition, DataError> {
        let cols = mask_columns(mask, self.features.ncols())?;
        Ok(Partition { features: self.features.select(Axis(1), &cols), labels: self.labels.clone(), indices: self.indices.clone() })
    }

    /// Row-wise concatenation.
    pub fn concat(&self, other: &Partition) -> Partition {
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()]).expect("same width");
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut indices = self.indices.clone();
        indices.extend_from_slice(&other.indices);
        Partition { features, labels, indices }
    }
}

/// The data the tuning loop may see.
#[derive(Debug, Clone)]
pub struct TuningSplit {
    pub train: Partition,
    pub val: Partition,
    pub k: usize,
}

/// The held-out test partition. Every read goes through [`HeldOut::read`],
/// which counts accesses so tests can assert tuning never touched it.
#[derive(Debug)]
pub struct HeldOut {
    part: Partition,
    reads: AtomicUsize,
}

impl HeldOut {
    pub fn read(&self) -> &Partition {
        self.reads.fetch_add(1, Ordering::SeqCst);
        &self.part
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.part.len()
    }

    pub fn is_empty(&self) -> bool {
        self.part.is_empty()
    }
}

#[derive(Debug)]
pub struct Splits {
    pub tuning: TuningSplit,
    pub test: HeldOut,
}

/// Sizes for `n` items under `fracs`, largest remainder first, with every
/// part getting at least one item.
fn apportion(n: usize, fracs: &[f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for i in 0..3 {
        sizes[i] = raw[i].floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let mut left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if sizes[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[donor] -= 1;
            sizes[i] = 1;
        }
    }
    sizes
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<Splits, DataError> {
    spec.validate()?;
    let fracs = [spec.train_frac, spec.val_frac, spec.test_frac];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(); ds.k];
        for (i, &l) in ds.labels.iter().enumerate() {
            g[l].push(i);
        }
        g
    } else {
        vec![(0..ds.n_samples()).collect()]
    };
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (c, mut idx) in groups.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 3 {
            let what = if spec.stratified { format!("class {c}") } else { "dataset".to_string() };
            return Err(DataError::Split(format!("{what} has {} samples, need at least 3", idx.len())));
        }
        idx.shuffle(&mut rng);
        let sizes = apportion(idx.len(), &fracs);
        let mut rest = idx.as_slice();
        for (p, &s) in parts.iter_mut().zip(&sizes) {
            let (head, tail) = rest.split_at(s);
            p.extend_from_slice(head);
            rest = tail;
        }
    }
    let [train, val, test] = parts;
    Ok(Splits {
        tuning: TuningSplit { train: Partition::gather(ds, train), val: Partition::gather(ds, val), k: ds.k },
        test: HeldOut { part: Partition::gather(ds, test), reads: AtomicUsize::new(0) },
    })
}

fn mask_columns(mask: &[bool], d: usize) -> Result<Vec<usize>, DataError> {
    if mask.len() != d {
        return Err(DataError::MaskLength { expected: d, got: mask.len() });
    }
    let cols: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    if cols.is_empty() {
        return Err(DataError::EmptyMask);
    }
    Ok(cols)
}

/// Copy of `ds` restricted to the masked columns.
pub fn apply_mask(ds: &Dataset, mask: &[bool]) -> Result<Dataset, DataError> {
    let cols = mask_columns(mask, ds.n_features())?;
    let informative = ds.informative.as_ref().map(|inf| {
        cols.iter().enumerate().filter(|(_, c)| inf.contains(c)).map(|(new, _)| new).collect()
    });
    Ok(Dataset {
        features: ds.features.select(Axis(1), &cols),
        labels: ds.labels.clone(),
        k: ds.k,
        feature_names: cols.iter().map(|&c| ds.feature_names[c].clone()).collect(),
        class_names: ds.class_names.clone(),
        standardization: cols.iter().map(|&c| ds.standardization[c]).collect(),
        informative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d_informative: usize,
    pub d_noise: usize,
    pub k: usize,
    pub seed: u64,
    /// Minimum gap between the best and second-best teacher score.
    pub margin: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n: 500, d_informative: 5, d_noise: 15, k: 2, seed: 0, margin: 0.5 }
    }
}

/// Gaussian features labelled by a random linear teacher over the
/// informative columns. Samples closer than `margin` to a decision boundary
/// are rejected, so the classes are linearly separable. Column order is
/// shuffled; `informative` records where the signal went.
pub fn synthesize(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    let SyntheticSpec { n, d_informative, d_noise, k, seed, margin } = *spec;
    if n < 2 || d_informative == 0 || k < 2 {
        return Err(DataError::Synthetic("need n ≥ 2, d_informative ≥ 1, k ≥ 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let teacher: Vec<Vec<f64>> = (0..k).map(|_| (0..d_informative).map(|_| normal()).collect()).collect();
    let d = d_informative + d_noise;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while rows.len() < n {
        attempts += 1;
        if attempts > n * 1000 {
            return Err(DataError::Synthetic("margin too large for rejection sampling".into()));
        }
        let x: Vec<f64> = (0..d_informative).map(|_| normal()).collect();
        let mut scores: Vec<(f64, usize)> =
            teacher.iter().enumerate().map(|(c, w)| (w.iter().zip(&x).map(|(a, b)| a * b).sum(), c)).collect();
        scores.sort_by(|a, b| b.0.total_cmp(&a.0));
        if scores[0].0 - scores[1].0 < margin {
            continue;
        }
        let mut row = x;
        row.extend((0..d_noise).map(|_| normal()));
        rows.push(row);
        labels.push(scores[0].1);
    }
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut rng);
    // perm[new] = old column
    let columns: Vec<Vec<f64>> = perm.iter().map(|&old| rows.iter().map(|r| r[old]).collect()).collect();
    let informative: Vec<usize> = (0..d).filter(|&new| perm[new] < d_informative).collect();
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let classes = (0..k).map(|c| c.to_string()).collect();
    let ds = finish(columns, names, labels, classes, Some(informative))?;
    if ds.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(DataError::TooFewClasses(1));
    }
    Ok(ds)
}
