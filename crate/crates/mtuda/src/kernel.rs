//! Gram matrix construction over the stacked sample set X = [X_s, X_t].
//!
//! The full kernel matrix K is built once; the source and target blocks K_s
//! and K_t are its first n_s and last n_t rows, exposed as views.

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};

use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median of pairwise Euclidean distances over X, zero distances excluded.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: Bandwidth,
    /// Added to the diagonal of the full Gram matrix. `None` resolves to
    /// 1e-8 * trace(K) / n.
    pub jitter: Option<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: KernelKind::Gaussian,
            bandwidth: Bandwidth::Auto,
            jitter: None,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(b) = self.bandwidth {
            if !(b > 0.0) {
                return Err(Error::InvalidParam(format!("bandwidth must be > 0, got {b}")));
            }
        }
        if let Some(j) = self.jitter {
            if !(j >= 0.0) {
                return Err(Error::InvalidParam(format!("jitter must be >= 0, got {j}")));
            }
        }
        Ok(())
    }
}

/// Precomputed kernel matrices for one source/target pair.
#[derive(Debug, Clone)]
pub struct GramBundle {
    /// (n_s+n_t)^2 symmetric matrix, jitter already on the diagonal.
    pub k_full: DMatrix<f64>,
    pub n_source: usize,
    pub n_target: usize,
    pub spec: KernelSpec,
    /// Bandwidth actually used (Gaussian only).
    pub resolved_bandwidth: Option<f64>,
    pub jitter_used: f64,
}

impl GramBundle {
    /// K_s: first n_s rows of K.
    pub fn k_source(&self) -> DMatrixView<'_, f64> {
        self.k_full.rows(0, self.n_source)
    }

    /// K_t: last n_t rows of K.
    pub fn k_target(&self) -> DMatrixView<'_, f64> {
        self.k_full.rows(self.n_source, self.n_target)
    }

    pub fn n_total(&self) -> usize {
        self.n_source + self.n_target
    }
}

fn sq_dist(a: DVectorView<'_, f64>, b: DVectorView<'_, f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

fn median_pairwise_distance(x: &DMatrix<f64>) -> Result<f64> {
    let n = x.ncols();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(x.column(i), x.column(j)).sqrt();
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::DegenerateBandwidth);
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists.len();
    Ok(if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    })
}

/// Builds K over X = [X_s, X_t] and returns the bundle with K_s and K_t as
/// row blocks. The upper triangle is computed and mirrored, so symmetry is
/// exact.
pub fn gram(
    source: &LabeledDataset,
    target: &UnlabeledDataset,
    spec: &KernelSpec,
) -> Result<GramBundle> {
    spec.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            context: "source vs target feature dimension".into(),
            expected: source.dim(),
            got: target.dim(),
        });
    }
    let n_s = source.sample_count();
    let n_t = target.sample_count();
    if n_s == 0 || n_t == 0 {
        return Err(Error::InvalidParam("need at least one sample per domain".into()));
    }
    let d = source.dim();
    let n = n_s + n_t;

    let mut x = DMatrix::zeros(d, n);
    x.columns_mut(0, n_s).copy_from(&source.features);
    x.columns_mut(n_s, n_t).copy_from(&target.features);

    let resolved_bandwidth = match spec.kind {
        KernelKind::Linear => None,
        KernelKind::Gaussian => Some(match spec.bandwidth {
            Bandwidth::Fixed(b) => b,
            Bandwidth::Auto => median_pairwise_distance(&x)?,
        }),
    };

    let mut k = DMatrix::zeros(n, n);
    match spec.kind {
        KernelKind::Linear => {
            for i in 0..n {
                for j in i..n {
                    let v = x.column(i).dot(&x.column(j));
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
        }
        KernelKind::Gaussian => {
            let sigma = resolved_bandwidth.unwrap();
            let denom = 2.0 * sigma * sigma;
            for i in 0..n {
                k[(i, i)] = 1.0;
                for j in (i + 1)..n {
                    let v = (-sq_dist(x.column(i), x.column(j)) / denom).exp();
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
        }
    }

    let jitter_used = spec
        .jitter
        .unwrap_or_else(|| 1e-8 * k.trace() / n as f64);
    for i in 0..n {
        k[(i, i)] += jitter_used;
    }

    Ok(GramBundle {
        k_full: k,
        n_source: n_s,
        n_target: n_t,
        spec: *spec,
        resolved_bandwidth,
        jitter_used,
    })
}

/// Evaluates K(x, x_i) for every training column x_i, under the bundle's
/// resolved bandwidth, without jitter.
pub fn kernel_row(
    x: DVectorView<'_, f64>,
    bundle: &GramBundle,
    training_features: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if x.len() != training_features.nrows() {
        return Err(Error::DimensionMismatch {
            context: "kernel_row query dimension".into(),
            expected: training_features.nrows(),
            got: x.len(),
        });
    }
    let n = training_features.ncols();
    let mut row = DVector::zeros(n);
    match bundle.spec.kind {
        KernelKind::Linear => {
            for i in 0..n {
                row[i] = x.dot(&training_features.column(i));
            }
        }
        KernelKind::Gaussian => {
            let sigma = bundle
                .resolved_bandwidth
                .ok_or_else(|| Error::InvalidParam("Gaussian bundle without bandwidth".into()))?;
            let denom = 2.0 * sigma * sigma;
            for i in 0..n {
                row[i] = (-sq_dist(x, training_features.column(i)) / denom).exp();
            }
        }
    }
    Ok(row)
}

/// Stacks source and target features into the d x (n_s+n_t) training matrix
/// used for prediction.
pub fn stacked_features(source: &LabeledDataset, target: &UnlabeledDataset) -> DMatrix<f64> {
    let d = source.dim();
    let n_s = source.sample_count();
    let n_t = target.sample_count();
    let mut x = DMatrix::zeros(d, n_s + n_t);
    x.columns_mut(0, n_s).copy_from(&source.features);
    x.columns_mut(n_s, n_t).copy_from(&target.features);
    x
}
