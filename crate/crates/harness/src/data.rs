//! Datasets in LIBSVM format and their split across agents.

use crate::HarnessError;
use dcatalyst::{Mat, Vector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

/// Sparse rows with labels in `{-1, +1}` (classification) or raw targets (regression).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub labels: Vec<f64>,
    pub dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn from_dense(features: &Mat, labels: &Vector) -> Self {
        let rows = (0..features.nrows())
            .map(|i| {
                (0..features.ncols()).filter(|&j| features[(i, j)] != 0.0).map(|j| (j, features[(i, j)])).collect()
            })
            .collect();
        Dataset { rows, labels: labels.iter().copied().collect(), dim: features.ncols() }
    }

    /// Dense features and labels of the rows in `idx`.
    pub fn dense(&self, idx: &[usize]) -> (Mat, Vector) {
        let mut a = Mat::zeros(idx.len(), self.dim);
        for (r, &i) in idx.iter().enumerate() {
            for &(j, v) in &self.rows[i] {
                a[(r, j)] = v;
            }
        }
        (a, Vector::from_iterator(idx.len(), idx.iter().map(|&i| self.labels[i])))
    }

    /// Every feature divided by the largest row norm, so that row norms are at most one.
    pub fn normalize_rows(&mut self) {
        let max = self.rows.iter().map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
        if max > 0.0 {
            for r in &mut self.rows {
                for (_, v) in r.iter_mut() {
                    *v /= max;
                }
            }
        }
    }
}

/// Raw labels in `{-1, 0, 1}` follow the binary rule (positive to `+1`, else `-1`);
/// anything else, e.g. digit classes, maps even to `+1` and odd to `-1`.
fn binarize(raw: &[f64]) -> Vec<f64> {
    let binary = raw.iter().all(|&v| v == -1.0 || v == 0.0 || v == 1.0);
    raw.iter()
        .map(|&v| {
            if binary {
                if v > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            } else if (v.round() as i64).rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Parses LIBSVM text; labels are kept as written.
pub fn parse_libsvm_raw(text: &str) -> crate::Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| HarnessError::Parse { line: lineno + 1, message: what.to_string() };
        let mut parts = line.split_whitespace();
        let label: f64 = parts.next().unwrap().parse().map_err(|_| bad("label is not a number"))?;
        let mut row = Vec::new();
        let mut last = 0;
        for tok in parts {
            let (i, v) = tok.split_once(':').ok_or_else(|| bad("expected index:value"))?;
            let i: usize = i.parse().map_err(|_| bad("index is not a positive integer"))?;
            let v: f64 = v.parse().map_err(|_| bad("value is not a number"))?;
            if i == 0 {
                return Err(bad("indices are 1-based"));
            }
            if i <= last {
                return Err(bad("indices must be increasing"));
            }
            last = i;
            dim = dim.max(i);
            row.push((i - 1, v));
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    Ok(Dataset { rows, labels, dim })
}

/// Parses LIBSVM text and maps labels to `{-1, +1}`.
pub fn parse_libsvm_str(text: &str) -> crate::Result<Dataset> {
    let mut d = parse_libsvm_raw(text)?;
    d.labels = binarize(&d.labels);
    Ok(d)
}

pub fn parse_libsvm(path: &Path) -> crate::Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_libsvm_str(&text)
}

/// Reads LIBSVM keeping the labels as real targets, for regression.
pub fn parse_libsvm_targets(path: &Path) -> crate::Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_libsvm_raw(&text)
}

/// LIBSVM text; floats use the shortest representation that round-trips.
pub fn to_libsvm_string(d: &Dataset) -> String {
    let mut out = String::new();
    for (row, label) in d.rows.iter().zip(&d.labels) {
        write!(out, "{label:?}").unwrap();
        for &(j, v) in row {
            write!(out, " {}:{v:?}", j + 1).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(d: &Dataset, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, to_libsvm_string(d)).map_err(|e| HarnessError::io(path, e))
}

/// Shuffles the row indices with `seed`, then splits them into `m` contiguous
/// shards whose sizes differ by at most one (the first shards take the remainder).
pub fn partition(n: usize, m: usize, seed: u64) -> Result<Vec<Vec<usize>>, HarnessError> {
    if m == 0 || n < m {
        return Err(HarnessError::Config(format!("cannot split {n} samples over {m} agents")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (q, r) = (n / m, n % m);
    let mut shards = Vec::with_capacity(m);
    let mut start = 0;
    for i in 0..m {
        let len = q + usize::from(i < r);
        shards.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(shards)
}
