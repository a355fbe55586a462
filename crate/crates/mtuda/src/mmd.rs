//! MMD coupling matrix M = M_0 + sum_c M_c over the stacked sample order
//! [source; target].
//!
//! Each block is an outer product v v^T, so M is positive semidefinite by
//! construction. A class with no target pseudo labels yields a zero block and
//! is recorded in `skipped_classes`.

use std::collections::BTreeSet;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Provisional target labels driving the conditional MMD blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabels {
    pub labels: Vec<usize>,
}

impl PseudoLabels {
    pub fn new(labels: Vec<usize>, class_count: usize) -> Result<Self> {
        for &l in &labels {
            if l >= class_count {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    class_count,
                });
            }
        }
        Ok(PseudoLabels { labels })
    }
}

#[derive(Debug, Clone)]
pub struct MmdMatrix {
    /// (n_s+n_t)^2 symmetric PSD matrix.
    pub m: DMatrix<f64>,
    pub class_counts_source: Vec<usize>,
    pub class_counts_target: Vec<usize>,
    pub skipped_classes: BTreeSet<usize>,
    /// Frobenius norm of the unnormalized sum, 1 when normalization is off.
    pub scale: f64,
}

/// Marginal block: v v^T with v_i = 1/n_s on source entries, -1/n_t on target.
pub fn build_m0(n_s: usize, n_t: usize) -> DMatrix<f64> {
    let n = n_s + n_t;
    let v = DVector::from_fn(n, |i, _| {
        if i < n_s {
            1.0 / n_s as f64
        } else {
            -1.0 / n_t as f64
        }
    });
    &v * v.transpose()
}

/// Conditional block for class `c`. Returns the zero matrix when the class is
/// empty on either side.
pub fn build_mc(source_labels: &[usize], pseudo: &PseudoLabels, c: usize) -> DMatrix<f64> {
    let n_s = source_labels.len();
    let n_t = pseudo.labels.len();
    let n = n_s + n_t;
    let ns_c = source_labels.iter().filter(|&&l| l == c).count();
    let nt_c = pseudo.labels.iter().filter(|&&l| l == c).count();
    if ns_c == 0 || nt_c == 0 {
        return DMatrix::zeros(n, n);
    }
    let v = DVector::from_fn(n, |i, _| {
        if i < n_s {
            if source_labels[i] == c {
                1.0 / ns_c as f64
            } else {
                0.0
            }
        } else if pseudo.labels[i - n_s] == c {
            -1.0 / nt_c as f64
        } else {
            0.0
        }
    });
    &v * v.transpose()
}

/// Full coupling matrix. With `normalize` the summed matrix is divided by its
/// Frobenius norm.
pub fn build_mmd(
    source_labels: &[usize],
    class_count: usize,
    pseudo: &PseudoLabels,
    normalize: bool,
) -> Result<MmdMatrix> {
    let n_s = source_labels.len();
    let n_t = pseudo.labels.len();
    if n_s == 0 || n_t == 0 {
        return Err(Error::InvalidParam("need samples in both domains".into()));
    }
    for &l in source_labels {
        if l >= class_count {
            return Err(Error::LabelOutOfRange {
                label: l,
                class_count,
            });
        }
    }

    let mut class_counts_source = vec![0usize; class_count];
    for &l in source_labels {
        class_counts_source[l] += 1;
    }
    let mut class_counts_target = vec![0usize; class_count];
    for &l in &pseudo.labels {
        if l >= class_count {
            return Err(Error::LabelOutOfRange {
                label: l,
                class_count,
            });
        }
        class_counts_target[l] += 1;
    }

    let mut m = build_m0(n_s, n_t);
    let mut skipped_classes = BTreeSet::new();
    for c in 0..class_count {
        if class_counts_source[c] == 0 || class_counts_target[c] == 0 {
            skipped_classes.insert(c);
            warn!("MMD: class {c} empty on one side, conditional block skipped");
            continue;
        }
        m += build_mc(source_labels, pseudo, c);
    }

    let mut scale = 1.0;
    if normalize {
        let fro = m.norm();
        if fro > 0.0 {
            m /= fro;
            scale = fro;
        }
    }

    Ok(MmdMatrix {
        m,
        class_counts_source,
        class_counts_target,
        skipped_classes,
        scale,
    })
}
