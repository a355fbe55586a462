//! p-nearest-neighbor graph and Laplacian over the target domain.
//!
//! Edges are binary and symmetrized by union: W_ij = 1 when either point is
//! among the p nearest neighbors of the other. Distance ties are broken by
//! ascending sample index. The normalized form is the symmetric
//! D^{-1/2} (D - W) D^{-1/2}, with isolated vertices contributing zero
//! rows/columns.

use nalgebra::DMatrix;

use crate::data::UnlabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TargetLaplacian {
    /// Symmetric 0/1 adjacency, zero diagonal.
    pub weights: DMatrix<f64>,
    /// D - W, or D^{-1/2}(D - W)D^{-1/2} when normalized.
    pub laplacian: DMatrix<f64>,
    pub neighbor_count: usize,
    pub normalized: bool,
}

pub fn build_laplacian(
    target: &UnlabeledDataset,
    p: usize,
    normalize: bool,
) -> Result<TargetLaplacian> {
    let n = target.sample_count();
    if p == 0 {
        return Err(Error::InvalidParam("neighbor count p must be >= 1".into()));
    }
    if p >= n {
        return Err(Error::NeighborCount { p, n_t: n });
    }
    let x = &target.features;

    let mut w = DMatrix::zeros(n, n);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = (x.column(i) - x.column(j)).norm_squared();
            order.push((d, j));
        }
        // ties broken by lower index: the index is the secondary sort key
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in order.iter().take(p) {
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
    }

    let degrees: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let mut lap = DMatrix::zeros(n, n);
    if normalize {
        let dinv_sqrt: Vec<f64> = degrees
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        for i in 0..n {
            for j in 0..n {
                let l_ij = if i == j { degrees[i] } else { 0.0 } - w[(i, j)];
                lap[(i, j)] = dinv_sqrt[i] * l_ij * dinv_sqrt[j];
            }
        }
    } else {
        for i in 0..n {
            lap[(i, i)] = degrees[i];
            for j in 0..n {
                lap[(i, j)] -= w[(i, j)];
            }
        }
    }

    Ok(TargetLaplacian {
        weights: w,
        laplacian: lap,
        neighbor_count: p,
        normalized: normalize,
    })
}

/// tr(f^T L f). For the unnormalized Laplacian this equals half the double
/// sum over (f_i - f_j)^2 W_ij, since that sum counts each edge twice.
pub fn manifold_energy(f_t: &DMatrix<f64>, lap: &TargetLaplacian) -> Result<f64> {
    let n = lap.laplacian.nrows();
    if f_t.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "manifold_energy row count".into(),
            expected: n,
            got: f_t.nrows(),
        });
    }
    Ok((f_t.transpose() * &lap.laplacian * f_t).trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand::Rng as _;
    use rand_chacha::ChaCha8Rng;

    fn points(coords: &[f64]) -> UnlabeledDataset {
        UnlabeledDataset::new(DMatrix::from_row_slice(1, coords.len(), coords)).unwrap()
    }

    #[test]
    fn two_points_complete_graph() {
        let t = points(&[0.0, 1.0]);
        let lap = build_laplacian(&t, 1, false).unwrap();
        assert_eq!(lap.weights, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(
            lap.laplacian,
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
    }

    #[test]
    fn collinear_union_symmetrization() {
        // 0, 1, 10 with p=1: directed edges 0->1, 1->0, 2->1; union gives
        // edges (0,1) and (1,2) only
        let t = points(&[0.0, 1.0, 10.0]);
        let lap = build_laplacian(&t, 1, false).unwrap();
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        );
        assert_eq!(lap.weights, expected);
    }

    #[test]
    fn tie_break_by_lower_index() {
        // point 0 is equidistant to 1 and 2; with p=1 it must pick index 1
        let t = UnlabeledDataset::new(DMatrix::from_column_slice(
            2,
            3,
            &[0.0, 0.0, 1.0, 0.0, -1.0, 0.0],
        ))
        .unwrap();
        let lap = build_laplacian(&t, 1, false).unwrap();
        assert_eq!(lap.weights[(0, 1)], 1.0);
        // (0,2) appears anyway only if 2 chose 0: dist(2,1)=2 > dist(2,0)=1,
        // so 2's nearest is 0 and the union adds (0,2)
        assert_eq!(lap.weights[(0, 2)], 1.0);
    }

    #[test]
    fn p_out_of_range() {
        let t = points(&[0.0, 1.0]);
        assert!(matches!(
            build_laplacian(&t, 2, false).unwrap_err(),
            Error::NeighborCount { .. }
        ));
        assert!(build_laplacian(&t, 0, false).is_err());
    }

    #[test]
    fn energy_examples() {
        let t = points(&[0.0, 1.0]);
        let lap = build_laplacian(&t, 1, false).unwrap();
        // constant column annihilated
        let f = DMatrix::from_column_slice(2, 1, &[3.0, 3.0]);
        assert_eq!(manifold_energy(&f, &lap).unwrap(), 0.0);
        // f = [0,1]: tr form gives 1, pairwise double sum gives 2
        let f = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let tr = manifold_energy(&f, &lap).unwrap();
        assert_eq!(tr, 1.0);
        let mut double_sum = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let d = f[(i, 0)] - f[(j, 0)];
                double_sum += d * d * lap.weights[(i, j)];
            }
        }
        assert_eq!(double_sum, 2.0 * tr);
        // zero input
        let f = DMatrix::zeros(2, 1);
        assert_eq!(manifold_energy(&f, &lap).unwrap(), 0.0);
        // shape mismatch
        let f = DMatrix::zeros(3, 1);
        assert!(manifold_energy(&f, &lap).is_err());
    }

    #[test]
    fn random_instances_row_sums_psd_and_eig_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.gen_range(5..15);
            let p = rng.gen_range(1..n.min(4));
            let feats = DMatrix::from_fn(2, n, |_, _| rng.gen_range(-3.0..3.0));
            let t = UnlabeledDataset::new(feats).unwrap();

            let lap = build_laplacian(&t, p, false).unwrap();
            for i in 0..n {
                assert!(lap.laplacian.row(i).sum().abs() <= 1e-10);
                assert_eq!(lap.weights[(i, i)], 0.0);
            }
            let eig = SymmetricEigen::new(lap.laplacian.clone());
            assert!(eig.eigenvalues.min() >= -1e-10);

            let lapn = build_laplacian(&t, p, true).unwrap();
            let eig = SymmetricEigen::new(lapn.laplacian.clone());
            assert!(eig.eigenvalues.min() >= -1e-10);
            assert!(eig.eigenvalues.max() <= 2.0 + 1e-10);
            for i in 0..n {
                let d = lapn.laplacian[(i, i)];
                assert!((0.0..=1.0 + 1e-12).contains(&d));
            }
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let feats = DMatrix::from_fn(3, 30, |_, _| rng.gen_range(-1.0..1.0));
        let t = UnlabeledDataset::new(feats).unwrap();
        let a = build_laplacian(&t, 4, true).unwrap();
        let b = build_laplacian(&t, 4, true).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.laplacian, b.laplacian);
    }

    proptest! {
        #[test]
        fn pairwise_trace_identity(
            seed in 0u64..1000,
            n in 4usize..12,
            p in 1usize..3,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let feats = DMatrix::from_fn(2, n, |_, _| rng.gen_range(-5.0..5.0));
            let t = UnlabeledDataset::new(feats).unwrap();
            let lap = build_laplacian(&t, p.min(n - 1), false).unwrap();
            let f = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-2.0..2.0));
            let tr = manifold_energy(&f, &lap).unwrap();
            let mut double_sum = 0.0;
            for c in 0..2 {
                for i in 0..n {
                    for j in 0..n {
                        let d = f[(i, c)] - f[(j, c)];
                        double_sum += d * d * lap.weights[(i, j)];
                    }
                }
            }
            prop_assert!((double_sum - 2.0 * tr).abs() <= 1e-9 * (1.0 + tr.abs()));
            prop_assert!(tr >= -1e-12);
        }
    }
}
