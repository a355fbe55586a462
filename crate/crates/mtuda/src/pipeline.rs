//! The full training loop: 1-NN pseudo-label initialization, per-iteration
//! MMD rebuild and solve, pseudo-label refresh from the target head, and
//! transductive evaluation.
//!
//! The Gram matrix and the target Laplacian do not depend on labels, so they
//! are built once; only the MMD matrix and the solve repeat.

use nalgebra::DMatrix;

use crate::data::{argmax, one_hot, LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::graph::build_laplacian;
use crate::kernel::{gram, stacked_features, KernelSpec};
use crate::mmd::{build_mmd, PseudoLabels};
use crate::solver::{
    fit_rls, fit_shared_baseline, fit_svm, nn_baseline, predict, Head, HyperParams, MtudaModel,
    SolveReport, SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Rls,
    Svm,
    SharedBaseline,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub kernel: KernelSpec,
    pub hp: HyperParams,
    pub neighbor_count: usize,
    pub iterations: usize,
    pub solver: SolverChoice,
    pub normalize_m: bool,
    pub normalize_l: bool,
    pub svm_options: SolverOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kernel: KernelSpec::default(),
            hp: HyperParams::default(),
            neighbor_count: 5,
            iterations: 10,
            solver: SolverChoice::Rls,
            normalize_m: true,
            normalize_l: true,
            svm_options: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: MtudaModel,
    pub report: SolveReport,
    pub pseudo_labels: PseudoLabels,
    /// Number of target points whose pseudo label changed, one per iteration.
    pub change_counts: Vec<usize>,
    pub per_iter_accuracy: Option<Vec<f64>>,
    pub final_accuracy: Option<f64>,
    pub resolved_bandwidth: Option<f64>,
}

/// Fraction of exact matches between two label vectors.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "accuracy vector lengths".into(),
            expected: truth.len().max(1),
            got: predicted.len(),
        });
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Runs the iterative adaptation loop. `eval_labels`, when given, is used
/// only to score target predictions; solvers never see it.
pub fn run(
    source: &LabeledDataset,
    target: &UnlabeledDataset,
    cfg: &PipelineConfig,
    eval_labels: Option<&[usize]>,
) -> Result<RunResult> {
    run_cached(source, target, cfg, eval_labels, None, None)
}

/// Like [`run`] but reusing a precomputed Gram bundle and/or Laplacian, for
/// parameter sweeps where the swept knob does not affect them. The caller is
/// responsible for passing caches consistent with `cfg`.
pub fn run_cached(
    source: &LabeledDataset,
    target: &UnlabeledDataset,
    cfg: &PipelineConfig,
    eval_labels: Option<&[usize]>,
    cached_gram: Option<&crate::kernel::GramBundle>,
    cached_lap: Option<&crate::graph::TargetLaplacian>,
) -> Result<RunResult> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidParam("iterations must be >= 1".into()));
    }
    if let Some(labels) = eval_labels {
        if labels.len() != target.sample_count() {
            return Err(Error::DimensionMismatch {
                context: "eval_labels length".into(),
                expected: target.sample_count(),
                got: labels.len(),
            });
        }
    }

    let g = match cached_gram {
        Some(g) => g.clone(),
        None => gram(source, target, &cfg.kernel)?,
    };
    let lap = match cached_lap {
        Some(l) => l.clone(),
        None => build_laplacian(target, cfg.neighbor_count, cfg.normalize_l)?,
    };
    let x_train = stacked_features(source, target);
    let y = one_hot(&source.labels, source.class_count)?;

    let mut pseudo = nn_baseline(source, &target.features)?;
    let mut change_counts = Vec::with_capacity(cfg.iterations);
    let mut accuracies = Vec::with_capacity(cfg.iterations);
    let mut last: Option<(MtudaModel, SolveReport)> = None;

    for _ in 0..cfg.iterations {
        let m = build_mmd(&source.labels, source.class_count, &pseudo, cfg.normalize_m)?;
        let fitted = match cfg.solver {
            SolverChoice::Rls => fit_rls(&g, &y, &lap, &m, &cfg.hp, &x_train)?,
            SolverChoice::Svm => {
                fit_svm(&g, &y, &lap, &m, &cfg.hp, &cfg.svm_options, &x_train)?
            }
            SolverChoice::SharedBaseline => {
                fit_shared_baseline(&g, &y, &lap, &m, &cfg.hp, &x_train)?
            }
        };

        let mut new_labels = Vec::with_capacity(target.sample_count());
        for j in 0..target.sample_count() {
            let scores = predict(&fitted.0, target.features.column(j), Head::Target)?;
            new_labels.push(argmax(&scores));
        }
        let changes = new_labels
            .iter()
            .zip(&pseudo.labels)
            .filter(|(a, b)| a != b)
            .count();
        change_counts.push(changes);
        pseudo = PseudoLabels::new(new_labels, source.class_count)?;
        if let Some(truth) = eval_labels {
            accuracies.push(accuracy(&pseudo.labels, truth)?);
        }
        last = Some(fitted);
    }

    let (model, report) = last.expect("iterations >= 1");
    let final_accuracy = accuracies.last().copied();
    Ok(RunResult {
        resolved_bandwidth: model.gram.resolved_bandwidth,
        model,
        report,
        pseudo_labels: pseudo,
        change_counts,
        per_iter_accuracy: eval_labels.map(|_| accuracies),
        final_accuracy,
    })
}

/// Evaluates the model on a resolution x resolution lattice over a 2-D box.
/// Returns (x, y, predicted class) triples in row-major lattice order.
pub fn decision_grid(
    model: &MtudaModel,
    bounds: (f64, f64, f64, f64),
    resolution: usize,
    which: Head,
) -> Result<Vec<(f64, f64, usize)>> {
    if model.training_features.nrows() != 2 {
        return Err(Error::DimensionMismatch {
            context: "decision_grid requires 2-D features".into(),
            expected: 2,
            got: model.training_features.nrows(),
        });
    }
    if resolution < 2 {
        return Err(Error::InvalidParam("grid resolution must be >= 2".into()));
    }
    let (x0, x1, y0, y1) = bounds;
    let mut out = Vec::with_capacity(resolution * resolution);
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    for iy in 0..resolution {
        for ix in 0..resolution {
            let px = step(x0, x1, ix);
            let py = step(y0, y1, iy);
            let point = DMatrix::from_column_slice(2, 1, &[px, py]);
            let scores = predict(model, point.column(0), which)?;
            out.push((px, py, argmax(&scores)));
        }
    }
    Ok(out)
}
