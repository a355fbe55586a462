//! Coupled-classifier solvers.
//!
//! Both classifiers are kernel expansions over all n_s+n_t training points
//! with coefficient matrices alpha_s, alpha_t (each n x C). The quadratic
//! part of every objective shares one 2n x 2n symmetric block matrix:
//!
//!   [ (ga+gm) K + gd Ks' Mss Ks        -gm K + gd Ks' Mst Kt       ]
//!   [ (-gm K + gd Ks' Mst Kt)'   (ga+gm) K + gi Kt' L Kt + gd Kt' Mtt Kt ]
//!
//! The RLS data-fit term adds Ks' Ks to the top-left block and Ks' Ys' to the
//! right-hand side; setting the gradient to zero gives one symmetric linear
//! system with C right-hand sides, solved by Cholesky. The SVM variant keeps
//! the quadratic part and minimizes the smoothed hinge by first-order descent
//! with Barzilai-Borwein steps.
//!
//! All trade-off coefficients are the hat-scaled values: the RLS objective is
//! the risk objective multiplied by n_s, the SVM objective keeps the 1/n_s
//! factor on the hinge, so the user-facing knobs match the reported settings
//! in both cases.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, DVectorView};

use crate::data::{argmax, LabelMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::graph::TargetLaplacian;
use crate::kernel::{kernel_row, GramBundle};
use crate::mmd::{MmdMatrix, PseudoLabels};

/// Hat-scaled trade-off coefficients. Defaults match the recommended
/// settings: gamma_m=1, gamma_a=0.1, gamma_i=1, gamma_d=1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub gamma_m_hat: f64,
    pub gamma_a_hat: f64,
    pub gamma_i_hat: f64,
    pub gamma_d_hat: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            gamma_m_hat: 1.0,
            gamma_a_hat: 0.1,
            gamma_i_hat: 1.0,
            gamma_d_hat: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_a_hat > 0.0) {
            return Err(Error::InvalidParam(format!(
                "gamma_a_hat must be > 0, got {}",
                self.gamma_a_hat
            )));
        }
        for (name, v) in [
            ("gamma_m_hat", self.gamma_m_hat),
            ("gamma_i_hat", self.gamma_i_hat),
            ("gamma_d_hat", self.gamma_d_hat),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParam(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Fitted coupled classifiers plus everything needed to score new points.
#[derive(Debug, Clone)]
pub struct MtudaModel {
    /// (n_s+n_t) x C.
    pub alpha_s: DMatrix<f64>,
    /// (n_s+n_t) x C.
    pub alpha_t: DMatrix<f64>,
    pub gram: GramBundle,
    /// d x (n_s+n_t), the stacked training samples.
    pub training_features: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy)]
pub enum Head {
    Source,
    Target,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub objective_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub converged: bool,
}

/// Options for the SVM descent path.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Total iteration cap across all smoothing stages.
    pub max_iters: usize,
    /// Stop when relative objective improvement over `patience` iterations
    /// falls below this.
    pub rel_tol: f64,
    pub patience: usize,
    /// Initial hinge smoothing; annealed by x0.1 `anneal_count` times.
    pub smoothing: f64,
    pub anneal_count: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 5000,
            rel_tol: 1e-7,
            patience: 20,
            smoothing: 1e-3,
            anneal_count: 2,
        }
    }
}

fn check_shapes(
    gram: &GramBundle,
    y: &LabelMatrix,
    lap: &TargetLaplacian,
    mmd: &MmdMatrix,
) -> Result<()> {
    let n = gram.n_total();
    if y.values.ncols() != gram.n_source {
        return Err(Error::DimensionMismatch {
            context: "label matrix columns vs n_s".into(),
            expected: gram.n_source,
            got: y.values.ncols(),
        });
    }
    if lap.laplacian.nrows() != gram.n_target {
        return Err(Error::DimensionMismatch {
            context: "Laplacian size vs n_t".into(),
            expected: gram.n_target,
            got: lap.laplacian.nrows(),
        });
    }
    if mmd.m.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "MMD matrix size vs n_s+n_t".into(),
            expected: n,
            got: mmd.m.nrows(),
        });
    }
    if !gram.k_full.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("Gram matrix".into()));
    }
    Ok(())
}

/// Quadratic-part block matrix shared by all objectives. With
/// `with_data_fit` the RLS term Ks' Ks is added to the top-left block.
pub(crate) fn assemble_quadratic(
    gram: &GramBundle,
    lap: &TargetLaplacian,
    mmd: &MmdMatrix,
    hp: &HyperParams,
    with_data_fit: bool,
) -> DMatrix<f64> {
    let n = gram.n_total();
    let n_s = gram.n_source;
    let n_t = gram.n_target;
    let k = &gram.k_full;
    let ks = gram.k_source();
    let kt = gram.k_target();

    let diag_k = k * (hp.gamma_a_hat + hp.gamma_m_hat);
    let mut a_ss = diag_k.clone();
    let mut a_st = k * (-hp.gamma_m_hat);
    let mut a_tt = diag_k;

    if with_data_fit {
        a_ss += ks.transpose() * ks;
    }
    if hp.gamma_i_hat > 0.0 {
        a_tt += kt.transpose() * &lap.laplacian * kt * hp.gamma_i_hat;
    }
    if hp.gamma_d_hat > 0.0 {
        let m_ss = mmd.m.view((0, 0), (n_s, n_s));
        let m_st = mmd.m.view((0, n_s), (n_s, n_t));
        let m_tt = mmd.m.view((n_s, n_s), (n_t, n_t));
        a_ss += ks.transpose() * m_ss * ks * hp.gamma_d_hat;
        a_st += ks.transpose() * m_st * kt * hp.gamma_d_hat;
        a_tt += kt.transpose() * m_tt * kt * hp.gamma_d_hat;
    }

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&a_ss);
    a.view_mut((0, n), (n, n)).copy_from(&a_st);
    a.view_mut((n, 0), (n, n)).copy_from(&a_st.transpose());
    a.view_mut((n, n), (n, n)).copy_from(&a_tt);
    // enforce exact symmetry against accumulation order differences
    for i in 0..2 * n {
        for j in (i + 1)..2 * n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sol = match Cholesky::new(a.clone()) {
        Some(chol) => {
            let l = chol.l();
            let dmin = (0..l.nrows()).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
            let dmax = (0..l.nrows()).map(|i| l[(i, i)]).fold(0.0, f64::max);
            let cond_estimate = (dmax / dmin).powi(2);
            if cond_estimate > 1e12 {
                log::warn!("linear system condition estimate {cond_estimate:.3e} exceeds 1e12");
            }
            chol.solve(b)
        }
        None => {
            // fall back to LU for systems Cholesky refuses
            let lu = a.clone().lu();
            match lu.solve(b) {
                Some(sol) => sol,
                None => {
                    return Err(Error::SingularSystem {
                        cond_estimate: f64::INFINITY,
                    })
                }
            }
        }
    };
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem {
            cond_estimate: f64::INFINITY,
        });
    }
    Ok(sol)
}

/// Closed-form coupled RLS fit. The returned coefficients are the unique
/// stationary point of the quadratic objective; the report carries the final
/// objective and the residual gradient norm.
pub fn fit_rls(
    gram: &GramBundle,
    y: &LabelMatrix,
    lap: &TargetLaplacian,
    mmd: &MmdMatrix,
    hp: &HyperParams,
    training_features: &DMatrix<f64>,
) -> Result<(MtudaModel, SolveReport)> {
    hp.validate()?;
    check_shapes(gram, y, lap, mmd)?;
    let start = Instant::now();
    let n = gram.n_total();
    let c = y.values.nrows();

    let a = assemble_quadratic(gram, lap, mmd, hp, true);
    let mut b = DMatrix::zeros(2 * n, c);
    b.view_mut((0, 0), (n, c))
        .copy_from(&(gram.k_source().transpose() * y.values.transpose()));

    let alpha = solve_spd(&a, &b)?;
    let grad = (&a * &alpha - &b) * 2.0;
    let gradient_norm = grad.norm();
    let objective_value =
        (alpha.transpose() * (&a * &alpha)).trace() - 2.0 * alpha.dot(&b) + y.values.norm_squared();

    let model = MtudaModel {
        alpha_s: alpha.rows(0, n).into_owned(),
        alpha_t: alpha.rows(n, n).into_owned(),
        gram: gram.clone(),
        training_features: training_features.clone(),
    };
    let report = SolveReport {
        objective_value,
        gradient_norm,
        iterations: 1,
        wall_time: start.elapsed().as_secs_f64(),
        converged: true,
    };
    Ok((model, report))
}

/// Shared-classifier (ARRLS-style) baseline: the same objective solved under
/// the constraint f_s = f_t. The classifier-similarity term vanishes
/// identically, so gamma_m has no effect.
pub fn fit_shared_baseline(
    gram: &GramBundle,
    y: &LabelMatrix,
    lap: &TargetLaplacian,
    mmd: &MmdMatrix,
    hp: &HyperParams,
    training_features: &DMatrix<f64>,
) -> Result<(MtudaModel, SolveReport)> {
    hp.validate()?;
    check_shapes(gram, y, lap, mmd)?;
    let start = Instant::now();
    let n = gram.n_total();

    // folding the 2x2 block system under alpha_s = alpha_t: the coupling
    // blocks cancel and the result is the single-classifier normal equations
    let big = assemble_quadratic(gram, lap, mmd, hp, true);
    let mut a = DMatrix::zeros(n, n);
    for (bi, bj) in [(0, 0), (0, n), (n, 0), (n, n)] {
        a += big.view((bi, bj), (n, n));
    }
    let b = gram.k_source().transpose() * y.values.transpose();

    let alpha = solve_spd(&a, &b)?;
    let grad = (&a * &alpha - &b) * 2.0;
    let gradient_norm = grad.norm();
    let objective_value =
        (alpha.transpose() * (&a * &alpha)).trace() - 2.0 * alpha.dot(&b) + y.values.norm_squared();

    let model = MtudaModel {
        alpha_s: alpha.clone(),
        alpha_t: alpha,
        gram: gram.clone(),
        training_features: training_features.clone(),
    };
    let report = SolveReport {
        objective_value,
        gradient_norm,
        iterations: 1,
        wall_time: start.elapsed().as_secs_f64(),
        converged: true,
    };
    Ok((model, report))
}

fn smoothed_hinge(z: f64, mu: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z >= mu {
        z - 0.5 * mu
    } else {
        z * z / (2.0 * mu)
    }
}

fn smoothed_hinge_deriv(z: f64, mu: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z >= mu {
        1.0
    } else {
        z / mu
    }
}

/// One binary SVM subproblem over x = [alpha_s_col; alpha_t_col].
struct SvmProblem<'a> {
    a: &'a DMatrix<f64>,
    ks: nalgebra::DMatrixView<'a, f64>,
    y_pm: &'a [f64],
    n: usize,
    mu: f64,
}

impl SvmProblem<'_> {
    fn objective(&self, x: &DVector<f64>) -> f64 {
        let quad = x.dot(&(self.a * x));
        let f_s = &self.ks * x.rows(0, self.n);
        let n_s = self.y_pm.len() as f64;
        let hinge: f64 = self
            .y_pm
            .iter()
            .zip(f_s.iter())
            .map(|(&y, &f)| smoothed_hinge(1.0 - y * f, self.mu))
            .sum();
        quad + hinge / n_s
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = (self.a * x) * 2.0;
        let f_s = &self.ks * x.rows(0, self.n);
        let n_s = self.y_pm.len() as f64;
        let mut w = DVector::zeros(self.y_pm.len());
        for i in 0..self.y_pm.len() {
            let y = self.y_pm[i];
            w[i] = -y * smoothed_hinge_deriv(1.0 - y * f_s[i], self.mu) / n_s;
        }
        let gs = self.ks.transpose() * w;
        for i in 0..self.n {
            g[i] += gs[i];
        }
        g
    }
}

/// Barzilai-Borwein descent with a monotone backtracking safeguard. Returns
/// (solution, iterations used, converged flag).
fn bb_descent(
    problem: &SvmProblem<'_>,
    mut x: DVector<f64>,
    max_iters: usize,
    rel_tol: f64,
    patience: usize,
) -> (DVector<f64>, usize, bool) {
    let mut f = problem.objective(&x);
    let mut g = problem.gradient(&x);
    let mut prev_x: Option<DVector<f64>> = None;
    let mut prev_g: Option<DVector<f64>> = None;
    let mut window_best = f;
    let mut since_improve = 0usize;

    for it in 0..max_iters {
        let gnorm2 = g.norm_squared();
        if gnorm2 <= 1e-24 {
            return (x, it, true);
        }
        let mut step = match (&prev_x, &prev_g) {
            (Some(px), Some(pg)) => {
                let s = &x - px;
                let yv = &g - pg;
                let sy = s.dot(&yv);
                if sy > 0.0 {
                    (s.norm_squared() / sy).clamp(1e-12, 1e6)
                } else {
                    1.0 / (1.0 + gnorm2.sqrt())
                }
            }
            _ => 1.0 / (1.0 + gnorm2.sqrt()),
        };

        // Armijo backtracking from the BB step
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = f;
        for _ in 0..40 {
            x_new = &x - &g * step;
            f_new = problem.objective(&x_new);
            if f_new <= f - 1e-4 * step * gnorm2 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return (x, it, true);
        }

        prev_x = Some(x);
        prev_g = Some(g);
        x = x_new;
        g = problem.gradient(&x);

        if window_best - f_new > rel_tol * (1.0 + f_new.abs()) {
            window_best = f_new;
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve >= patience {
                return (x, it + 1, true);
            }
        }
        f = f_new;
    }
    (x, max_iters, false)
}

/// Hinge-loss coupled fit, one-vs-rest for C > 2, solved in the primal with a
/// smoothed hinge annealed over decreasing smoothing values.
pub fn fit_svm(
    gram: &GramBundle,
    y: &LabelMatrix,
    lap: &TargetLaplacian,
    mmd: &MmdMatrix,
    hp: &HyperParams,
    opt: &SolverOptions,
    training_features: &DMatrix<f64>,
) -> Result<(MtudaModel, SolveReport)> {
    hp.validate()?;
    check_shapes(gram, y, lap, mmd)?;
    let start = Instant::now();
    let n = gram.n_total();
    let c = y.values.nrows();
    let n_s = gram.n_source;

    let a = assemble_quadratic(gram, lap, mmd, hp, false);
    let ks = gram.k_source();

    let mut alpha_s = DMatrix::zeros(n, c);
    let mut alpha_t = DMatrix::zeros(n, c);
    let mut total_iters = 0usize;
    let mut converged = true;
    let mut objective_value = 0.0;

    for class in 0..c {
        let y_pm: Vec<f64> = (0..n_s)
            .map(|i| if y.values[(class, i)] > 0.5 { 1.0 } else { -1.0 })
            .collect();
        let mut x = DVector::zeros(2 * n);
        let mut mu = opt.smoothing;
        let budget = opt.max_iters;
        for stage in 0..=opt.anneal_count {
            let remaining = budget.saturating_sub(total_iters % budget.max(1));
            let stage_cap = if stage == opt.anneal_count {
                remaining
            } else {
                remaining / 2
            }
            .max(1);
            let problem = SvmProblem {
                a: &a,
                ks,
                y_pm: &y_pm,
                n,
                mu,
            };
            let (x_new, iters, ok) =
                bb_descent(&problem, x, stage_cap, opt.rel_tol, opt.patience);
            x = x_new;
            total_iters += iters;
            converged &= ok;
            mu *= 0.1;
        }
        // exact-hinge objective for the report
        let f_s = &ks * x.rows(0, n);
        let hinge: f64 = y_pm
            .iter()
            .zip(f_s.iter())
            .map(|(&yv, &f)| (1.0 - yv * f).max(0.0))
            .sum::<f64>()
            / n_s as f64;
        objective_value += x.dot(&(&a * &x)) + hinge;
        alpha_s.set_column(class, &x.rows(0, n).into_owned());
        alpha_t.set_column(class, &x.rows(n, n).into_owned());
    }

    if !converged {
        log::warn!("SVM descent hit the iteration cap; returning best iterate");
    }

    // gradient norm at the final smoothing level, stacked over classes
    let mut gradient_norm = 0.0f64;
    let mu_final = opt.smoothing * 0.1f64.powi(opt.anneal_count as i32);
    for class in 0..c {
        let y_pm: Vec<f64> = (0..n_s)
            .map(|i| if y.values[(class, i)] > 0.5 { 1.0 } else { -1.0 })
            .collect();
        let problem = SvmProblem {
            a: &a,
            ks,
            y_pm: &y_pm,
            n,
            mu: mu_final,
        };
        let mut x = DVector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(&alpha_s.column(class));
        x.rows_mut(n, n).copy_from(&alpha_t.column(class));
        gradient_norm += problem.gradient(&x).norm_squared();
    }
    gradient_norm = gradient_norm.sqrt();

    let model = MtudaModel {
        alpha_s,
        alpha_t,
        gram: gram.clone(),
        training_features: training_features.clone(),
    };
    let report = SolveReport {
        objective_value,
        gradient_norm,
        iterations: total_iters,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
    };
    Ok((model, report))
}

/// Scores a single point under the chosen head.
pub fn predict(model: &MtudaModel, x: DVectorView<'_, f64>, which: Head) -> Result<DVector<f64>> {
    let row = kernel_row(x, &model.gram, &model.training_features)?;
    let alpha = match which {
        Head::Source => &model.alpha_s,
        Head::Target => &model.alpha_t,
    };
    Ok(alpha.transpose() * row)
}

/// Predicted class for a single point (argmax, lowest index wins ties).
pub fn predict_class(model: &MtudaModel, x: DVectorView<'_, f64>, which: Head) -> Result<usize> {
    Ok(argmax(&predict(model, x, which)?))
}

/// 1-nearest-neighbor label transfer from the source domain; distance ties
/// go to the lower source index.
pub fn nn_baseline(source: &LabeledDataset, target_features: &DMatrix<f64>) -> Result<PseudoLabels> {
    if source.dim() != target_features.nrows() {
        return Err(Error::DimensionMismatch {
            context: "nn_baseline feature dimension".into(),
            expected: source.dim(),
            got: target_features.nrows(),
        });
    }
    let mut labels = Vec::with_capacity(target_features.ncols());
    for j in 0..target_features.ncols() {
        let q = target_features.column(j);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for i in 0..source.sample_count() {
            let d = (q - source.features.column(i)).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        labels.push(source.labels[best]);
    }
    PseudoLabels::new(labels, source.class_count)
}
