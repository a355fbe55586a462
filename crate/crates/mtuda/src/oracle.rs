//! Independent objective evaluation and a brute-force numerical minimizer.
//!
//! Everything here evaluates the objectives term by term from their
//! definitions and minimizes with finite-difference gradients only; nothing
//! touches the solvers' assembled systems. Used by the test suites to certify
//! the closed-form solution and the SVM descent path.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::LabelMatrix;
use crate::graph::TargetLaplacian;
use crate::kernel::GramBundle;
use crate::mmd::MmdMatrix;
use crate::solver::HyperParams;

/// Quadratic regularizer terms common to both losses, evaluated directly
/// from the classifier outputs.
fn regularizer_terms(
    gram: &GramBundle,
    lap: &TargetLaplacian,
    mmd: &MmdMatrix,
    hp: &HyperParams,
    alpha_s: &DMatrix<f64>,
    alpha_t: &DMatrix<f64>,
) -> f64 {
    let k = &gram.k_full;
    let f_t = gram.k_target() * alpha_t;
    let f_s = gram.k_source() * alpha_s;

    let manifold = (f_t.transpose() * &lap.laplacian * &f_t).trace();
    let shrink = (alpha_s.transpose() * k * alpha_s).trace()
        + (alpha_t.transpose() * k * alpha_t).trace();
    let diff = alpha_s - alpha_t;
    let coupling = (diff.transpose() * k * &diff).trace();

    let n_s = gram.n_source;
    let n_t = gram.n_target;
    let c = alpha_s.ncols();
    let mut f_all = DMatrix::zeros(n_s + n_t, c);
    f_all.rows_mut(0, n_s).copy_from(&f_s);
    f_all.rows_mut(n_s, n_t).copy_from(&f_t);
    let mmd_term = (f_all.transpose() * &mmd.m * &f_all).trace();

    hp.gamma_i_hat * manifold
        + hp.gamma_a_hat * shrink
        + hp.gamma_m_hat * coupling
        + hp.gamma_d_hat * mmd_term
}

/// Squared-loss objective in hat form (the risk objective times n_s).
pub fn rls_objective(
    gram: &GramBundle,
    y: &LabelMatrix,
    lap: &TargetLaplacian,
    mmd: &MmdMatrix,
    hp: &HyperParams,
    alpha_s: &DMatrix<f64>,
    alpha_t: &DMatrix<f64>,
) -> f64 {
    let f_s = gram.k_source() * alpha_s;
    let residual = y.values.transpose() - f_s;
    residual.norm_squared() + regularizer_terms(gram, lap, mmd, hp, alpha_s, alpha_t)
}

/// Hinge-loss objective with exact (unsmoothed) hinge, one-vs-rest encoding
/// derived from the one-hot label matrix.
pub fn svm_objective(
    gram: &GramBundle,
    y: &LabelMatrix,
    lap: &TargetLaplacian,
    mmd: &MmdMatrix,
    hp: &HyperParams,
    alpha_s: &DMatrix<f64>,
    alpha_t: &DMatrix<f64>,
) -> f64 {
    let f_s = gram.k_source() * alpha_s;
    let n_s = gram.n_source;
    let c = y.values.nrows();
    let mut hinge = 0.0;
    for class in 0..c {
        for i in 0..n_s {
            let y_pm = if y.values[(class, i)] > 0.5 { 1.0 } else { -1.0 };
            hinge += (1.0 - y_pm * f_s[(i, class)]).max(0.0);
        }
    }
    hinge / n_s as f64 + regularizer_terms(gram, lap, mmd, hp, alpha_s, alpha_t)
}

/// Flattens (alpha_s, alpha_t) column-major into one vector.
pub fn pack(alpha_s: &DMatrix<f64>, alpha_t: &DMatrix<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(alpha_s.len() + alpha_t.len());
    v.rows_mut(0, alpha_s.len())
        .copy_from_slice(alpha_s.as_slice());
    v.rows_mut(alpha_s.len(), alpha_t.len())
        .copy_from_slice(alpha_t.as_slice());
    v
}

pub fn unpack(v: &DVector<f64>, n: usize, c: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let a_s = DMatrix::from_column_slice(n, c, &v.as_slice()[..n * c]);
    let a_t = DMatrix::from_column_slice(n, c, &v.as_slice()[n * c..]);
    (a_s, a_t)
}

/// Stacked [alpha_s; alpha_t] as a 2n x C matrix (the solver's layout).
pub fn unpack_matrix(v: &DVector<f64>, n: usize, c: usize) -> DMatrix<f64> {
    let (a_s, a_t) = unpack(v, n, c);
    let mut m = DMatrix::zeros(2 * n, c);
    m.rows_mut(0, n).copy_from(&a_s);
    m.rows_mut(n, n).copy_from(&a_t);
    m
}

/// Column-major flattening of a stacked matrix back to pack() layout.
pub fn pack_matrix(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() / 2;
    let a_s = m.rows(0, n).into_owned();
    let a_t = m.rows(n, n).into_owned();
    pack(&a_s, &a_t)
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: &impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        let orig = x[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Nonlinear conjugate gradient (Polak-Ribiere) on finite-difference
/// gradients with a parabolic line search (exact for quadratics).
pub fn cg_minimize(
    f: &impl Fn(&DVector<f64>) -> f64,
    x0: DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> (DVector<f64>, f64) {
    let dim = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    let mut g = fd_gradient(f, &x);
    let mut d = -&g;
    let mut stall = 0usize;

    for it in 0..max_iters {
        let dnorm = d.norm();
        if dnorm <= 1e-14 {
            break;
        }
        // parabola through f(x), f(x + a d), f(x - a d); exact step for
        // quadratic objectives
        let a = (1.0 / dnorm).min(1.0);
        let fp = f(&(&x + &d * a));
        let fm = f(&(&x - &d * a));
        let denom = fp - 2.0 * fx + fm;
        let mut t = if denom > 1e-300 {
            a * 0.5 * (fm - fp) / denom
        } else if fp < fx {
            a
        } else {
            -a
        };

        // safeguarded acceptance: backtrack toward 0 until improvement
        let mut x_new = &x + &d * t;
        let mut f_new = f(&x_new);
        let mut tries = 0;
        while f_new > fx && tries < 50 {
            t *= 0.5;
            x_new = &x + &d * t;
            f_new = f(&x_new);
            tries += 1;
        }
        if f_new > fx {
            break;
        }

        let improved = fx - f_new;
        let g_new = fd_gradient(f, &x_new);
        let beta = {
            let num = g_new.dot(&(&g_new - &g));
            let den = g.norm_squared();
            if den > 0.0 { (num / den).max(0.0) } else { 0.0 }
        };
        d = -&g_new + &d * beta;
        if (it + 1) % dim == 0 {
            d = -&g_new;
        }
        x = x_new;
        fx = f_new;
        g = g_new;

        if improved <= tol * (1.0 + fx.abs()) {
            stall += 1;
            if stall >= 3 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    (x, fx)
}

/// Multi-start brute-force minimization. Returns the best (argmin, value)
/// found across a zero start and `extra_starts` random starts.
pub fn minimize_multistart(
    f: &impl Fn(&DVector<f64>) -> f64,
    dim: usize,
    extra_starts: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> (DVector<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_x = DVector::zeros(dim);
    let mut best_f = f64::INFINITY;
    for s in 0..=extra_starts {
        let x0 = if s == 0 {
            DVector::zeros(dim)
        } else {
            DVector::from_fn(dim, |_, _| rng.gen_range(-0.5..0.5))
        };
        let (x, fx) = cg_minimize(f, x0, max_iters, tol);
        if fx < best_f {
            best_f = fx;
            best_x = x;
        }
    }
    (best_x, best_f)
}
