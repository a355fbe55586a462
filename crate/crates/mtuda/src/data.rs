//! Dataset containers, CSV ingestion, one-hot label encoding, and the
//! two-Gaussian synthetic generator used for the toy experiments.
//!
//! Conventions: feature matrices are d x n (each column is a sample), CSV
//! files are one sample per row. Labels are always re-encoded to a dense
//! 0..C-1 range; the original values are kept in `label_map` for reporting.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Labelled samples (source domain, or target ground truth held out for
/// evaluation).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// d x n, one sample per column.
    pub features: DMatrix<f64>,
    /// Dense labels in 0..class_count.
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Dense label -> original value as read from the file.
    pub label_map: Vec<i64>,
}

/// Unlabelled samples (target domain as seen by the solvers).
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDataset {
    /// d x n_t, one sample per column.
    pub features: DMatrix<f64>,
}

/// One-hot label matrix, C x n_s, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub values: DMatrix<f64>,
}

/// Two-domain synthetic Gaussian mixture specification.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub source_centers: Vec<[f64; 2]>,
    pub target_centers: Vec<[f64; 2]>,
    pub per_class_count: usize,
    pub std_dev: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    /// The toy setting: two source classes at (0,2) and (2,0); the target
    /// keeps class 1 at (2,0) but shifts class 0 to (-1,-1).
    fn default() -> Self {
        SyntheticSpec {
            source_centers: vec![[0.0, 2.0], [2.0, 0.0]],
            target_centers: vec![[-1.0, -1.0], [2.0, 0.0]],
            per_class_count: 100,
            std_dev: 0.5,
            rng_seed: 0,
        }
    }
}

impl LabeledDataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let label_map = (0..class_count as i64).collect();
        Self::with_label_map(features, labels, class_count, label_map)
    }

    pub fn with_label_map(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        class_count: usize,
        label_map: Vec<i64>,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::InvalidParam(format!(
                "class_count must be >= 2, got {class_count}"
            )));
        }
        if labels.len() != features.ncols() {
            return Err(Error::DimensionMismatch {
                context: "labels vs feature columns".into(),
                expected: features.ncols(),
                got: labels.len(),
            });
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        let mut seen = vec![false; class_count];
        for &l in &labels {
            if l >= class_count {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    class_count,
                });
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParam(format!(
                "class {missing} has no samples"
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            class_count,
            label_map,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    /// Drops the labels, yielding the view the solvers are allowed to see.
    pub fn strip_labels(&self) -> UnlabeledDataset {
        UnlabeledDataset {
            features: self.features.clone(),
        }
    }
}

impl UnlabeledDataset {
    pub fn new(features: DMatrix<f64>) -> Result<Self> {
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(UnlabeledDataset { features })
    }

    pub fn sample_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }
}

/// Result of loading a CSV file, depending on whether a label column was
/// requested.
#[derive(Debug, Clone)]
pub enum Dataset {
    Labeled(LabeledDataset),
    Unlabeled(UnlabeledDataset),
}

/// Loads a CSV file (one sample per row, '.' decimal point, no header unless
/// `skip_header`). When `label_column` is given that column is consumed as an
/// integer label and re-encoded densely.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<usize>,
    skip_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let text = std::fs::read_to_string(path)?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut width: Option<usize> = None;

    for (line_idx, line) in text.lines().enumerate() {
        if skip_header && line_idx == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row_no = line_idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => {
                if let Some(lc) = label_column {
                    if lc >= cells.len() {
                        return Err(Error::LabelColumnOutOfRange {
                            path: pstr,
                            col: lc,
                            width: cells.len(),
                        });
                    }
                }
                width = Some(cells.len());
            }
            Some(w) if w != cells.len() => {
                return Err(Error::CsvRagged {
                    path: pstr,
                    row: row_no,
                    expected: w,
                    got: cells.len(),
                });
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(cells.len());
        for (col_idx, cell) in cells.iter().enumerate() {
            let trimmed = cell.trim();
            if Some(col_idx) == label_column {
                let v: f64 = trimmed.parse().map_err(|_| Error::CsvParse {
                    path: pstr.clone(),
                    row: row_no,
                    col: col_idx + 1,
                    cell: trimmed.to_string(),
                })?;
                if !v.is_finite() || v.fract() != 0.0 {
                    return Err(Error::CsvParse {
                        path: pstr,
                        row: row_no,
                        col: col_idx + 1,
                        cell: trimmed.to_string(),
                    });
                }
                raw_labels.push(v as i64);
            } else {
                let v: f64 = trimmed.parse().map_err(|_| Error::CsvParse {
                    path: pstr.clone(),
                    row: row_no,
                    col: col_idx + 1,
                    cell: trimmed.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "{pstr}: row {row_no}, column {}",
                        col_idx + 1
                    )));
                }
                row.push(v);
            }
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::CsvEmpty { path: pstr });
    }

    let n = rows.len();
    let d = rows[0].len();
    let features = DMatrix::from_fn(d, n, |r, c| rows[c][r]);

    match label_column {
        None => Ok(Dataset::Unlabeled(UnlabeledDataset::new(features)?)),
        Some(_) => {
            // Dense re-encoding: sorted unique originals become 0..C-1.
            let mut uniq: Vec<i64> = raw_labels.clone();
            uniq.sort_unstable();
            uniq.dedup();
            let labels: Vec<usize> = raw_labels
                .iter()
                .map(|l| uniq.binary_search(l).unwrap())
                .collect();
            Ok(Dataset::Labeled(LabeledDataset::with_label_map(
                features,
                labels,
                uniq.len(),
                uniq,
            )?))
        }
    }
}

/// Writes features (and an optional trailing label column) back to CSV in
/// row-per-sample layout. Numbers are printed with the shortest
/// representation that round-trips, so load -> write -> load is exact.
pub fn write_csv(
    path: impl AsRef<Path>,
    features: &DMatrix<f64>,
    labels: Option<&[i64]>,
) -> Result<()> {
    let mut out = String::new();
    for c in 0..features.ncols() {
        for r in 0..features.nrows() {
            if r > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", features[(r, c)]);
        }
        if let Some(labels) = labels {
            let _ = write!(out, ",{}", labels[c]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Samples the source and target two-domain Gaussian mixtures. Target labels
/// are returned for evaluation only and must never reach a solver.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    if spec.source_centers.len() != spec.target_centers.len() {
        return Err(Error::InvalidParam(
            "source_centers and target_centers must have equal length".into(),
        ));
    }
    if spec.source_centers.len() < 2 {
        return Err(Error::InvalidParam("need at least 2 classes".into()));
    }
    if spec.per_class_count == 0 {
        return Err(Error::InvalidParam("per_class_count must be positive".into()));
    }
    if !(spec.std_dev >= 0.0) {
        return Err(Error::InvalidParam("std_dev must be nonnegative".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut sample = |centers: &[[f64; 2]]| -> (DMatrix<f64>, Vec<usize>) {
        let c = centers.len();
        let n = c * spec.per_class_count;
        let mut feats = DMatrix::zeros(2, n);
        let mut labels = Vec::with_capacity(n);
        for (k, center) in centers.iter().enumerate() {
            for j in 0..spec.per_class_count {
                let col = k * spec.per_class_count + j;
                feats[(0, col)] = center[0] + spec.std_dev * normal.sample(&mut rng);
                feats[(1, col)] = center[1] + spec.std_dev * normal.sample(&mut rng);
                labels.push(k);
            }
        }
        (feats, labels)
    };

    let (sf, sl) = sample(&spec.source_centers);
    let (tf, tl) = sample(&spec.target_centers);
    let c = spec.source_centers.len();
    Ok((
        LabeledDataset::new(sf, sl, c)?,
        LabeledDataset::new(tf, tl, c)?,
    ))
}

/// One-hot encodes a dense label vector into a C x n matrix.
pub fn one_hot(labels: &[usize], class_count: usize) -> Result<LabelMatrix> {
    let mut values = DMatrix::zeros(class_count, labels.len());
    for (j, &l) in labels.iter().enumerate() {
        if l >= class_count {
            return Err(Error::LabelOutOfRange {
                label: l,
                class_count,
            });
        }
        values[(l, j)] = 1.0;
    }
    Ok(LabelMatrix { values })
}

/// Argmax over a score column with lowest-index tie-break.
pub fn argmax(scores: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best
}
