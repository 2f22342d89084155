//! Fixed-width feature-vector datasets: CSV loading, splits, folds, and
//! shuffled mini-batches. CSV rows are an integer label followed by a fixed
//! number of real features; an optional header row is detected by its
//! non-numeric first field.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor2D;

#[derive(Debug, Clone)]
pub struct Dataset {
    features: Tensor2D,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    /// Builds a dataset; the class count is the highest label plus one.
    pub fn new(features: Tensor2D, labels: Vec<usize>) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::with_n_classes(features, labels, n_classes)
    }

    /// Builds a dataset with an explicit class count, so subsets keep the
    /// class space of their parent even when a class is absent.
    pub fn with_n_classes(
        features: Tensor2D,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                left: features.shape(),
                right: (labels.len(), 1),
            });
        }
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::Parameter(format!(
                "dataset needs at least one sample and one feature, got shape {:?}",
                features.shape()
            )));
        }
        if let Some(bad) = features.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "dataset features must be finite, found {bad}"
            )));
        }
        for (row, &label) in labels.iter().enumerate() {
            if label >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    n_classes,
                    at: Some(row),
                });
            }
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Tensor2D {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows at the given indices, in the given order. Keeps `n_classes`.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let dim = self.input_dim();
        let mut features = Tensor2D::zeros(indices.len(), dim);
        let mut labels = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            if i >= self.n_samples() {
                return Err(Error::Parameter(format!(
                    "subset index {i} out of range for {} samples",
                    self.n_samples()
                )));
            }
            for c in 0..dim {
                features.set(r, c, self.features.get(i, c));
            }
            labels.push(self.labels[i]);
        }
        Dataset::with_n_classes(features, labels, self.n_classes)
    }

    /// Rows `lo..hi` as a borrowed feature block plus labels, for chunked
    /// evaluation without copying the whole dataset.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> (Tensor2D, &[usize]) {
        let dim = self.input_dim();
        let mut block = Tensor2D::zeros(hi - lo, dim);
        for r in lo..hi {
            for c in 0..dim {
                block.set(r - lo, c, self.features.get(r, c));
            }
        }
        (block, &self.labels[lo..hi])
    }
}

/// Loads label-plus-features CSV. `expect_dim` pins the feature width;
/// without it the first data row sets the width. Errors carry 1-based line
/// numbers.
pub fn load_csv(path: impl AsRef<Path>, expect_dim: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading dataset from {}", path.display()), e))?;
    let parse_fail = |line: usize, msg: String| Error::CsvParse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut dim = expect_dim;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut n_rows = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        // Header detection: a non-numeric first field on the first
        // non-empty line is a header and is skipped.
        if n_rows == 0 && labels.is_empty() && fields[0].parse::<f64>().is_err() {
            continue;
        }
        let label: i64 = fields[0]
            .parse()
            .map_err(|_| parse_fail(line_no, format!("label {:?} is not an integer", fields[0])))?;
        if label < 0 {
            return Err(parse_fail(line_no, format!("label {label} is negative")));
        }
        let row_dim = fields.len() - 1;
        match dim {
            None => dim = Some(row_dim),
            Some(d) if d != row_dim => {
                return Err(parse_fail(
                    line_no,
                    format!("expected {d} features, found {row_dim}"),
                ));
            }
            Some(_) => {}
        }
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_fail(line_no, format!("feature {f:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_fail(line_no, format!("feature {f:?} is not finite")));
            }
            values.push(v);
        }
        labels.push(label as usize);
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(parse_fail(1, "no data rows".into()));
    }
    let dim = dim.unwrap();
    if dim == 0 {
        return Err(parse_fail(1, "rows have a label but no features".into()));
    }
    Dataset::new(Tensor2D::from_vec(n_rows, dim, values)?, labels)
}

/// Writes the canonical CSV form: no header, label then features, floats in
/// shortest round-trip notation. `load_csv(write_csv(ds))` reproduces `ds`
/// bit for bit.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in 0..ds.n_samples() {
        out.push_str(&ds.labels[r].to_string());
        for c in 0..ds.input_dim() {
            out.push(',');
            out.push_str(&ds.features.get(r, c).to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| Error::io(format!("writing dataset to {}", path.display()), e))
}

/// Splits into (kept, held) by a seeded shuffle; the held side gets
/// `round(fraction * n)` samples. Both sides must end up non-empty.
pub fn holdout_split(ds: &Dataset, fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = ds.n_samples();
    if n < 2 {
        return Err(Error::Parameter(format!(
            "holdout split needs at least 2 samples, got {n}"
        )));
    }
    let n_held = (fraction * n as f64).round() as usize;
    if n_held == 0 || n_held == n {
        return Err(Error::Parameter(format!(
            "holdout fraction {fraction} of {n} samples leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let held = ds.subset(&idx[..n_held])?;
    let kept = ds.subset(&idx[n_held..])?;
    Ok((kept, held))
}

/// Fold assignments for repeated k-fold cross-validation.
/// `folds[repeat][fold]` lists sample indices; each repeat is a fresh
/// seeded shuffle, and within a repeat the folds partition the dataset
/// with sizes differing by at most one.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub k: usize,
    pub repeats: usize,
    pub folds: Vec<Vec<Vec<usize>>>,
}

pub fn make_folds(ds: &Dataset, k: usize, repeats: usize, seed: u64) -> Result<FoldPlan> {
    let n = ds.n_samples();
    if k < 2 || k > n {
        return Err(Error::Parameter(format!(
            "fold count must lie in 2..=n_samples ({n}), got {k}"
        )));
    }
    if repeats == 0 {
        return Err(Error::Parameter("repeats must be positive".into()));
    }
    let mut folds = Vec::with_capacity(repeats);
    for repeat in 0..repeats {
        let mut rng = Rng::new(crate::rng::derive_seed(seed, &[SEED_STREAM_FOLDS, repeat as u64]));
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        // The first n % k folds take one extra sample.
        let base = n / k;
        let extra = n % k;
        let mut at = 0usize;
        let mut assignment = Vec::with_capacity(k);
        for f in 0..k {
            let size = base + usize::from(f < extra);
            assignment.push(idx[at..at + size].to_vec());
            at += size;
        }
        folds.push(assignment);
    }
    Ok(FoldPlan { k, repeats, folds })
}

/// One training mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor2D,
    pub y: Vec<usize>,
}

/// Shuffled mini-batches for one epoch. A final batch of a single sample is
/// dropped because train-mode batch statistics need two rows; shorter-but-
/// valid final batches are kept.
pub fn batches(ds: &Dataset, batch_size: usize, rng: &mut Rng) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::Parameter(format!(
            "batch_size must be at least 2, got {batch_size}"
        )));
    }
    let n = ds.n_samples();
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let mut out = Vec::with_capacity(n.div_ceil(batch_size));
    for chunk in idx.chunks(batch_size) {
        if chunk.len() < 2 {
            continue;
        }
        let sub = ds.subset(chunk)?;
        out.push(Batch {
            x: sub.features,
            y: sub.labels,
        });
    }
    Ok(out)
}

/// Seed-stream tags keep independently seeded generators from colliding.
pub(crate) const SEED_STREAM_FOLDS: u64 = 1;
pub(crate) const SEED_STREAM_CV_RUN: u64 = 2;
pub(crate) const SEED_STREAM_SEARCH_SPLIT: u64 = 3;
