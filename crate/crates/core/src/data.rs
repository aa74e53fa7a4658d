//! Labeled datasets, synthetic Gaussian blobs, and the CSV format.
//!
//! CSV layout: a header `f0,...,f{d-1},label` optionally followed by the
//! bookkeeping columns `noisy_label,clean_label,corrupted,open_set` for
//! corrupted datasets. In a corrupted file `label` carries the noisy label.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rng::rng_from_seed;

/// Features stored row-major (`n x d`) with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    n_classes: usize,
}

fn check_features(features: &[f64], n_features: usize, n: usize) -> Result<()> {
    if n_features == 0 {
        return Err(Error::shape("datasets need at least one feature column"));
    }
    if features.len() != n * n_features {
        return Err(Error::shape(format!(
            "{} feature values for {n} rows of width {n_features}",
            features.len()
        )));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }
    Ok(())
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    if let Some(y) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::Data(format!("label {y} out of range for {n_classes} classes")));
    }
    Ok(())
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        check_features(&features, n_features, labels.len())?;
        check_labels(&labels, n_classes)?;
        Ok(Dataset {
            features,
            n_features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Rows `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Per-class mean feature vectors; classes without rows get `None`.
    pub fn class_means(&self) -> Vec<Option<Vec<f64>>> {
        let d = self.n_features;
        let mut sums = vec![vec![0.0; d]; self.n_classes];
        let mut counts = vec![0usize; self.n_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            counts[y] += 1;
            for (s, x) in sums[y].iter_mut().zip(self.row(i)) {
                *s += x;
            }
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
            .collect()
    }
}

/// A dataset whose training labels may have been corrupted.
///
/// Clean labels are kept for evaluation only; training code reads
/// [`NoisyDataset::noisy_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    features: Vec<f64>,
    n_features: usize,
    n_classes: usize,
    noisy_labels: Vec<usize>,
    clean_labels: Vec<usize>,
    corrupted: Vec<bool>,
    open_set: Vec<bool>,
}

impl NoisyDataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        n_classes: usize,
        noisy_labels: Vec<usize>,
        clean_labels: Vec<usize>,
        corrupted: Vec<bool>,
        open_set: Vec<bool>,
    ) -> Result<Self> {
        let n = noisy_labels.len();
        if clean_labels.len() != n || corrupted.len() != n || open_set.len() != n {
            return Err(Error::shape("label and flag columns differ in length"));
        }
        check_features(&features, n_features, n)?;
        check_labels(&noisy_labels, n_classes)?;
        check_labels(&clean_labels, n_classes)?;
        for i in 0..n {
            if !open_set[i] && corrupted[i] != (noisy_labels[i] != clean_labels[i]) {
                return Err(Error::Data(format!(
                    "row {i}: corrupted flag disagrees with labels"
                )));
            }
        }
        Ok(NoisyDataset {
            features,
            n_features,
            n_classes,
            noisy_labels,
            clean_labels,
            corrupted,
            open_set,
        })
    }

    /// Wrap a clean dataset: noisy labels equal clean labels, nothing flagged.
    pub fn from_clean(ds: &Dataset) -> Self {
        let n = ds.len();
        NoisyDataset {
            features: ds.features.clone(),
            n_features: ds.n_features,
            n_classes: ds.n_classes,
            noisy_labels: ds.labels.clone(),
            clean_labels: ds.labels.clone(),
            corrupted: vec![false; n],
            open_set: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    /// Ground-truth labels. Evaluation only.
    pub fn clean_labels(&self) -> &[usize] {
        &self.clean_labels
    }

    pub fn corrupted(&self) -> &[bool] {
        &self.corrupted
    }

    pub fn open_set_flags(&self) -> &[bool] {
        &self.open_set
    }

    pub fn corrupted_count(&self) -> usize {
        self.corrupted.iter().filter(|&&b| b).count()
    }

    pub fn subset(&self, indices: &[usize]) -> NoisyDataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let pick = |v: &[usize]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_b = |v: &[bool]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        NoisyDataset {
            features,
            n_features: self.n_features,
            n_classes: self.n_classes,
            noisy_labels: pick(&self.noisy_labels),
            clean_labels: pick(&self.clean_labels),
            corrupted: pick_b(&self.corrupted),
            open_set: pick_b(&self.open_set),
        }
    }

    /// The dataset as seen by a trainer: features with noisy labels.
    pub fn observed(&self) -> Dataset {
        Dataset {
            features: self.features.clone(),
            n_features: self.n_features,
            labels: self.noisy_labels.clone(),
            n_classes: self.n_classes,
        }
    }
}

/// `c` unit-covariance Gaussian clusters in `d` dimensions with balanced labels.
///
/// Cluster means sit at `±(separation/√2)·e_i`, so every pair of means is at
/// least `separation` apart. This needs `c <= 2d`.
pub fn synth_blobs(n: usize, d: usize, c: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if c < 2 {
        return Err(Error::config("need at least 2 classes"));
    }
    if d == 0 {
        return Err(Error::config("need at least one feature dimension"));
    }
    if n < c {
        return Err(Error::config(format!("n = {n} is smaller than c = {c}")));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::config("separation must be positive and finite"));
    }
    if c > 2 * d {
        return Err(Error::config(format!(
            "cannot place {c} means pairwise {separation} apart on the ±axis lattice in {d} dimensions (needs c <= 2d)"
        )));
    }
    let radius = separation / std::f64::consts::SQRT_2;
    let means: Vec<Vec<f64>> = (0..c)
        .map(|j| {
            let mut m = vec![0.0; d];
            m[j / 2] = if j % 2 == 0 { radius } else { -radius };
            m
        })
        .collect();

    let mut rng = rng_from_seed(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n * d);
    for &y in &labels {
        for m in &means[y] {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(m + z);
        }
    }
    Dataset::new(features, d, labels, c)
}

const BOOKKEEPING: [&str; 4] = ["noisy_label", "clean_label", "corrupted", "open_set"];

fn header(d: usize, noisy: bool) -> String {
    let mut cols: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    cols.push("label".into());
    if noisy {
        cols.extend(BOOKKEEPING.iter().map(|s| s.to_string()));
    }
    cols.join(",")
}

fn push_row(out: &mut String, row: &[f64]) {
    for x in row {
        // `{}` on f64 prints the shortest string that round-trips exactly.
        out.push_str(&format!("{x},"));
    }
}

pub fn dataset_to_csv(ds: &Dataset) -> String {
    let mut out = header(ds.n_features, false);
    out.push('\n');
    for i in 0..ds.len() {
        push_row(&mut out, ds.row(i));
        out.push_str(&format!("{}\n", ds.labels[i]));
    }
    out
}

pub fn noisy_dataset_to_csv(ds: &NoisyDataset) -> String {
    let mut out = header(ds.n_features, true);
    out.push('\n');
    for i in 0..ds.len() {
        push_row(&mut out, ds.row(i));
        out.push_str(&format!(
            "{0},{0},{1},{2},{3}\n",
            ds.noisy_labels[i],
            ds.clean_labels[i],
            u8::from(ds.corrupted[i]),
            u8::from(ds.open_set[i])
        ));
    }
    out
}

pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    write_atomic(path, dataset_to_csv(ds).as_bytes())
}

pub fn write_noisy_csv(path: &Path, ds: &NoisyDataset) -> Result<()> {
    write_atomic(path, noisy_dataset_to_csv(ds).as_bytes())
}

/// Result of [`load_csv`]: a plain dataset, or a corrupted one when the
/// bookkeeping columns are present.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvData {
    Clean(Dataset),
    Noisy(NoisyDataset),
}

impl CsvData {
    /// The labels a trainer would see.
    pub fn observed(&self) -> Dataset {
        match self {
            CsvData::Clean(d) => d.clone(),
            CsvData::Noisy(d) => d.observed(),
        }
    }

    pub fn into_noisy(self) -> NoisyDataset {
        match self {
            CsvData::Clean(d) => NoisyDataset::from_clean(&d),
            CsvData::Noisy(d) => d,
        }
    }
}

pub fn load_csv(path: &Path) -> Result<CsvData> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

fn parse_label(field: &str, line: usize, col: &str) -> Result<usize> {
    field.trim().parse::<usize>().map_err(|_| Error::Parse {
        line,
        msg: format!("`{field}` in column `{col}` is not a class index"),
    })
}

fn parse_flag(field: &str, line: usize, col: &str) -> Result<bool> {
    match field.trim() {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        other => Err(Error::Parse {
            line,
            msg: format!("`{other}` in column `{col}` is not a 0/1 flag"),
        }),
    }
}

pub fn parse_csv(text: &str) -> Result<CsvData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or(Error::Parse { line: 1, msg: "missing `label` column".into() })?;
    for (j, h) in headers[..label_col].iter().enumerate() {
        if *h != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected feature column `f{j}`, found `{h}`"),
            });
        }
    }
    let d = label_col;
    let extra = &headers[label_col + 1..];
    let noisy = match extra.len() {
        0 => false,
        4 if extra.iter().zip(BOOKKEEPING).all(|(a, b)| a == b) => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected trailing columns {extra:?}"),
            })
        }
    };

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut clean = Vec::new();
    let mut corrupted = Vec::new();
    let mut open_set = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for j in 0..d {
            let field = record[j].trim();
            let x: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("`{field}` in column f{j} is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite value `{field}` in column f{j}"),
                });
            }
            features.push(x);
        }
        labels.push(parse_label(&record[d], line, "label")?);
        if noisy {
            let noisy_label = parse_label(&record[d + 1], line, "noisy_label")?;
            if noisy_label != labels[labels.len() - 1] {
                return Err(Error::Parse {
                    line,
                    msg: "`label` and `noisy_label` disagree".into(),
                });
            }
            clean.push(parse_label(&record[d + 2], line, "clean_label")?);
            corrupted.push(parse_flag(&record[d + 3], line, "corrupted")?);
            open_set.push(parse_flag(&record[d + 4], line, "open_set")?);
        }
    }
    if labels.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let c = labels.iter().chain(clean.iter()).max().copied().unwrap_or(0) + 1;
    if noisy {
        Ok(CsvData::Noisy(NoisyDataset::new(
            features, d, c, labels, clean, corrupted, open_set,
        )?))
    } else {
        Ok(CsvData::Clean(Dataset::new(features, d, labels, c)?))
    }
}
