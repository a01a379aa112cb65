//! Leading eigenpairs of a Gram matrix and the eigenfunctions of the empirical
//! integral operator they induce.
//!
//! For eigenpairs `(sigma_i, v_i)` of `K` over `N` points, the operator
//! `L_N f = (1/N) sum_j k(x_j, .) f(x_j)` has eigenvalues `lambda_i = sigma_i / N`
//! and RKHS-normalized eigenfunctions
//! `phi_i(x) = sigma_i^{-1/2} sum_j v_i[j] k(x_j, x)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{kernel_vector, CrossGram, Dataset, GramMatrix, KernelSpec};

/// Eigenvalues at or below this fraction of the largest are treated as numerically null.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Eigenvalues of `K` may dip below zero by at most this multiple of `N`.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Target residual `|K v - sigma v|` for the iterative solver, relative to `max(sigma_1, 1)`.
const SUBSPACE_RESIDUAL: f64 = 1e-9;
const SUBSPACE_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    /// Full dense symmetric decomposition, truncated.
    Dense,
    /// Block subspace iteration with Rayleigh-Ritz; falls back to `Dense` if it stalls.
    Subspace,
    /// `Subspace` when the requested block is small relative to `N`, else `Dense`.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    sigmas: DVector<f64>,
    vectors: DMatrix<f64>,
    lambdas: DVector<f64>,
    n_points: usize,
}

impl EigenSystem {
    /// Assemble from eigenvalues (descending) and matching column eigenvectors.
    ///
    /// Negative eigenvalues within the PSD tolerance are clamped to zero.
    pub fn from_parts(sigmas: DVector<f64>, vectors: DMatrix<f64>) -> Result<Self> {
        let n_points = vectors.nrows();
        let s = sigmas.len();
        if s == 0 || n_points == 0 {
            return Err(Error::Empty("eigensystem"));
        }
        if vectors.ncols() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: vectors.ncols(),
            });
        }
        let tolerance = -PSD_TOLERANCE * n_points as f64;
        let mut sigmas = sigmas;
        for i in 0..s {
            if !sigmas[i].is_finite() {
                return Err(Error::NonFinite(i));
            }
            if i > 0 && sigmas[i] > sigmas[i - 1] {
                return Err(Error::invalid("sigmas", "must be sorted in descending order"));
            }
            if sigmas[i] < tolerance {
                return Err(Error::NotPsd {
                    eigenvalue: sigmas[i],
                    tolerance,
                });
            }
            sigmas[i] = sigmas[i].max(0.0);
        }
        let lambdas = sigmas.map(|v| v / n_points as f64);
        Ok(EigenSystem {
            sigmas,
            vectors,
            lambdas,
            n_points,
        })
    }

    /// Eigenvalues of `K`, descending.
    pub fn sigmas(&self) -> &DVector<f64> {
        &self.sigmas
    }

    /// Eigenvalues of the empirical operator, `sigma_i / N`.
    pub fn lambdas(&self) -> &DVector<f64> {
        &self.lambdas
    }

    /// `N x s` matrix of eigenvectors, one per column.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn s(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_null(&self, i: usize) -> bool {
        let top = self.sigmas[0];
        top <= 0.0 || self.sigmas[i] <= RANK_TOLERANCE * top
    }

    /// Number of leading eigenpairs above the rank tolerance.
    pub fn numerical_rank(&self) -> usize {
        (0..self.s()).take_while(|&i| !self.is_null(i)).count()
    }

    /// Keep only the leading `s` pairs.
    pub fn truncated(&self, s: usize) -> Result<EigenSystem> {
        if s == 0 || s > self.s() {
            return Err(Error::invalid(
                "s",
                format!("must be in 1..={}, got {s}", self.s()),
            ));
        }
        Ok(EigenSystem {
            sigmas: self.sigmas.rows(0, s).into_owned(),
            vectors: self.vectors.columns(0, s).into_owned(),
            lambdas: self.lambdas.rows(0, s).into_owned(),
            n_points: self.n_points,
        })
    }

    pub(crate) fn require_nonnull(&self, count: usize) -> Result<()> {
        if let Some(i) = (0..count).find(|&i| self.is_null(i)) {
            return Err(Error::NullEigenpair {
                index: i,
                sigma: self.sigmas[i],
            });
        }
        Ok(())
    }

    /// `V_s diag(sigma^{-1/2})`: maps a kernel vector against the training points
    /// to the first `s` eigenfunction values.
    pub fn feature_map(&self, s: usize) -> Result<DMatrix<f64>> {
        if s == 0 || s > self.s() {
            return Err(Error::invalid(
                "s",
                format!("must be in 1..={}, got {s}", self.s()),
            ));
        }
        self.require_nonnull(s)?;
        let mut m = self.vectors.columns(0, s).into_owned();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col /= self.sigmas[j].sqrt();
        }
        Ok(m)
    }

    /// Writes `index,sigma,lambda` rows (1-based index).
    pub fn write_spectrum_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,sigma,lambda")?;
        for i in 0..self.s() {
            writeln!(out, "{},{},{}", i + 1, self.sigmas[i], self.lambdas[i])?;
        }
        Ok(())
    }
}

/// The `s` largest eigenpairs of `K`, mapped to operator eigenpairs.
pub fn top_eigenpairs(k: &GramMatrix, s: usize) -> Result<EigenSystem> {
    top_eigenpairs_with(k, s, EigenSolver::Auto)
}

pub fn top_eigenpairs_with(k: &GramMatrix, s: usize, solver: EigenSolver) -> Result<EigenSystem> {
    let n = k.n_points();
    if s == 0 || s > n {
        return Err(Error::invalid(
            "s",
            format!("must be in 1..={n}, got {s}"),
        ));
    }
    let block = subspace_block(n, s);
    let use_subspace = match solver {
        EigenSolver::Dense => false,
        EigenSolver::Subspace => block < n,
        EigenSolver::Auto => n >= 400 && block * 4 <= n,
    };
    let (sigmas, mut vectors) = if use_subspace {
        match subspace_iteration(k.values(), s, block) {
            Some(pairs) => pairs,
            None => dense_top(k.values(), s),
        }
    } else {
        dense_top(k.values(), s)
    };
    fix_signs(&mut vectors);
    EigenSystem::from_parts(sigmas, vectors)
}

fn dense_top(k: &DMatrix<f64>, s: usize) -> (DVector<f64>, DMatrix<f64>) {
    let eig = k.clone().symmetric_eigen();
    let order = descending_order(eig.eigenvalues.as_slice());
    let sigmas = DVector::from_iterator(s, order.iter().take(s).map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(&order[..s]);
    (sigmas, vectors)
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

fn subspace_block(n: usize, s: usize) -> usize {
    (s + s.max(16)).min(n)
}

/// Block subspace iteration with a Rayleigh-Ritz step every sweep.
///
/// Returns `None` if the leading `s` residuals do not reach the target within the
/// iteration budget.
fn subspace_iteration(
    k: &DMatrix<f64>,
    s: usize,
    block: usize,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    // Fixed seed: identical inputs give identical eigenvectors.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let start = DMatrix::from_fn(n, block, |_, _| rng.gen::<f64>() - 0.5);
    let mut q = start.qr().q();
    for _ in 0..SUBSPACE_MAX_ITER {
        let z = k * &q;
        let mut h = q.transpose() * &z;
        h = (&h + h.transpose()) * 0.5;
        let eig = h.symmetric_eigen();
        let order = descending_order(eig.eigenvalues.as_slice());
        let w = eig.eigenvectors.select_columns(&order);
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let qw = &q * &w;
        let zw = &z * &w;
        let scale = theta[0].max(1.0);
        let converged = (0..s).all(|j| {
            let r = zw.column(j) - qw.column(j) * theta[j];
            r.norm() <= SUBSPACE_RESIDUAL * scale
        });
        if converged {
            let sigmas = DVector::from_column_slice(&theta[..s]);
            return Some((sigmas, qw.columns(0, s).into_owned()));
        }
        q = zw.qr().q();
    }
    None
}

/// Flip each column so its largest-magnitude entry is positive.
fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0.0f64;
        for &v in col.iter() {
            if v.abs() > best.abs() {
                best = v;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// `phi_i(x) = sigma_i^{-1/2} sum_j v_i[j] k(x_j, x)` (0-based `i`).
pub fn eval_eigenfunction(
    es: &EigenSystem,
    spec: &KernelSpec,
    train: &Dataset,
    i: usize,
    x: &[f64],
) -> Result<f64> {
    if i >= es.s() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: es.s(),
        });
    }
    if train.len() != es.n_points() {
        return Err(Error::DimensionMismatch {
            expected: es.n_points(),
            found: train.len(),
        });
    }
    if es.is_null(i) {
        return Err(Error::NullEigenpair {
            index: i,
            sigma: es.sigmas[i],
        });
    }
    let kv = kernel_vector(spec, train, x)?;
    let dot: f64 = es.vectors.column(i).iter().zip(&kv).map(|(v, k)| v * k).sum();
    Ok(dot / es.sigmas[i].sqrt())
}

/// `Phi[r][j] = phi_j(point r)` for the points spanned by the cross-Gram columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
}

/// `Phi = cross^T V diag(sigma^{-1/2})`, using every eigenpair in `es`.
pub fn eigenfunction_features(es: &EigenSystem, cross: &CrossGram) -> Result<FeatureMatrix> {
    eigenfunction_features_s(es, cross, es.s())
}

/// As [`eigenfunction_features`], restricted to the leading `s` eigenfunctions.
pub fn eigenfunction_features_s(
    es: &EigenSystem,
    cross: &CrossGram,
    s: usize,
) -> Result<FeatureMatrix> {
    if cross.rows() != es.n_points() {
        return Err(Error::DimensionMismatch {
            expected: es.n_points(),
            found: cross.rows(),
        });
    }
    let map = es.feature_map(s)?;
    Ok(FeatureMatrix {
        values: cross.values().transpose() * map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{cross_gram, gram_matrix};
    use proptest::prelude::*;
    use rand::Rng;

    fn gram(rows: &[&[f64]]) -> GramMatrix {
        let n = rows.len();
        GramMatrix::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    fn random_points(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect();
        Dataset::from_flat(v, d, None).unwrap()
    }

    #[test]
    fn identity_spectrum() {
        let k = GramMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let es = top_eigenpairs(&k, 2).unwrap();
        assert_eq!(es.sigmas().as_slice(), &[1.0, 1.0]);
        assert_eq!(es.lambdas().as_slice(), &[1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn constant_kernel_rank_one() {
        let k = GramMatrix::from_matrix(DMatrix::from_element(4, 4, 1.0)).unwrap();
        let es = top_eigenpairs(&k, 1).unwrap();
        assert!((es.sigmas()[0] - 4.0).abs() < 1e-12);
        assert!((es.lambdas()[0] - 1.0).abs() < 1e-12);
        for &v in es.vectors().column(0).iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_analytic() {
        let k = gram(&[&[1.0, 0.5], &[0.5, 1.0]]);
        let es = top_eigenpairs(&k, 2).unwrap();
        assert!((es.sigmas()[0] - 1.5).abs() < 1e-14);
        assert!((es.sigmas()[1] - 0.5).abs() < 1e-14);
        assert!((es.lambdas()[0] - 0.75).abs() < 1e-14);
        assert!((es.lambdas()[1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn s_out_of_range_is_an_error() {
        let k = GramMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        assert!(top_eigenpairs(&k, 4).is_err());
        assert!(top_eigenpairs(&k, 0).is_err());
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let k = gram(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(top_eigenpairs(&k, 2), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn null_pairs_are_flagged_not_evaluated() {
        let k = GramMatrix::from_matrix(DMatrix::from_element(3, 3, 1.0)).unwrap();
        let es = top_eigenpairs(&k, 3).unwrap();
        assert_eq!(es.numerical_rank(), 1);
        assert!(es.is_null(1));
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let err = eval_eigenfunction(&es, &KernelSpec::LinearNormalized, &data, 1, &[0.5]);
        assert!(matches!(err, Err(Error::NullEigenpair { index: 1, .. })));
        assert!(es.feature_map(2).is_err());
    }

    #[test]
    fn constant_kernel_eigenfunction_is_one() {
        // Normalized linear kernel on positive 1-d points is identically one.
        let data = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let spec = KernelSpec::LinearNormalized;
        let k = gram_matrix(&spec, &data).unwrap();
        let es = top_eigenpairs(&k, 1).unwrap();
        let v = eval_eigenfunction(&es, &spec, &data, 0, &[7.5]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_eigenfunction_value() {
        // k(x0, x1) = 0.5 for rbf with |x0 - x1|^2 = 2 ln 2.
        let gap = (2.0 * 2f64.ln()).sqrt();
        let data = Dataset::from_rows(&[vec![0.0], vec![gap]]).unwrap();
        let spec = KernelSpec::rbf(1.0);
        let k = gram_matrix(&spec, &data).unwrap();
        let es = top_eigenpairs(&k, 2).unwrap();
        let v = eval_eigenfunction(&es, &spec, &data, 0, &[0.0]).unwrap();
        assert!((v - 0.75f64.sqrt()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn features_on_training_set_have_diagonal_gram() {
        let data = random_points(5, 2, 3);
        let spec = KernelSpec::rbf(0.6);
        let k = gram_matrix(&spec, &data).unwrap();
        let es = top_eigenpairs(&k, 5).unwrap();
        let cross = k.columns(&[0, 1, 2, 3, 4]).unwrap();
        let phi = eigenfunction_features(&es, &cross).unwrap();
        let ptp = phi.values().transpose() * phi.values();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { es.sigmas()[i] } else { 0.0 };
                assert!((ptp[(i, j)] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn features_match_pointwise_eigenfunctions() {
        let data = random_points(6, 3, 9);
        let spec = KernelSpec::rbf(0.8);
        let k = gram_matrix(&spec, &data).unwrap();
        let es = top_eigenpairs(&k, 4).unwrap();
        let labeled = [4, 1, 5];
        let cross = cross_gram(&spec, &data, &labeled).unwrap();
        let phi = eigenfunction_features(&es, &cross).unwrap();
        for (r, &idx) in labeled.iter().enumerate() {
            for j in 0..4 {
                let direct = eval_eigenfunction(&es, &spec, &data, j, data.point(idx)).unwrap();
                assert!((phi.values()[(r, j)] - direct).abs() < 1e-10);
            }
        }
        let single = cross_gram(&spec, &data, &[2]).unwrap();
        let one = eigenfunction_features_s(&es, &single, 1).unwrap();
        assert_eq!((one.rows(), one.cols()), (1, 1));
        let direct = eval_eigenfunction(&es, &spec, &data, 0, data.point(2)).unwrap();
        assert!((one.values()[(0, 0)] - direct).abs() < 1e-10);
    }

    #[test]
    fn eigenfunction_matches_matrix_path_on_training_points() {
        let data = random_points(12, 2, 21);
        let spec = KernelSpec::rbf(0.5);
        let k = gram_matrix(&spec, &data).unwrap();
        let es = top_eigenpairs(&k, 6).unwrap();
        let path = k.values() * es.feature_map(6).unwrap();
        for r in 0..12 {
            for j in 0..6 {
                let direct = eval_eigenfunction(&es, &spec, &data, j, data.point(r)).unwrap();
                assert!((path[(r, j)] - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let data = random_points(10, 2, 5);
        let k = gram_matrix(&KernelSpec::rbf(0.3), &data).unwrap();
        let es = top_eigenpairs(&k, 5).unwrap();
        for col in es.vectors().column_iter() {
            let max = col.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn subspace_solver_agrees_with_dense() {
        let data = random_points(500, 2, 77);
        let k = gram_matrix(&KernelSpec::rbf(0.2), &data).unwrap();
        let dense = top_eigenpairs_with(&k, 12, EigenSolver::Dense).unwrap();
        let iter = top_eigenpairs_with(&k, 12, EigenSolver::Subspace).unwrap();
        let scale = dense.sigmas()[0].max(1.0);
        for i in 0..12 {
            assert!((dense.sigmas()[i] - iter.sigmas()[i]).abs() <= 1e-8 * scale);
            let r = k.values() * iter.vectors().column(i) - iter.vectors().column(i) * iter.sigmas()[i];
            assert!(r.norm() <= 1e-6 * scale);
        }
        // Compare spanned subspaces rather than vectors (robust to near-degeneracy).
        let pd = dense.vectors() * dense.vectors().transpose();
        let pi = iter.vectors() * iter.vectors().transpose();
        assert!((pd - pi).norm() < 1e-6);
    }

    #[test]
    fn degenerate_eigenspace_projector_is_unique() {
        // Two identical blocks: every eigenvalue is doubled.
        let mut m = DMatrix::zeros(4, 4);
        let block = [[1.0, 0.3], [0.3, 1.0]];
        for b in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    m[(2 * b + i, 2 * b + j)] = block[i][j];
                }
            }
        }
        let k = GramMatrix::from_matrix(m).unwrap();
        let es = top_eigenpairs(&k, 2).unwrap();
        let p = es.vectors() * es.vectors().transpose();
        let mut expected = DMatrix::zeros(4, 4);
        for b in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    expected[(2 * b + i, 2 * b + j)] = 0.5;
                }
            }
        }
        assert!((p - expected).norm() < 1e-6);
    }

    #[test]
    fn spectrum_csv_layout() {
        let k = gram(&[&[1.0, 0.5], &[0.5, 1.0]]);
        let es = top_eigenpairs(&k, 2).unwrap();
        let mut buf = Vec::new();
        es.write_spectrum_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,sigma,lambda");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "1,1.5,0.75");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn residual_orthonormality_and_ordering(seed in 0u64..10_000, n in 2usize..40, bw in 0.1f64..2.0) {
            let data = random_points(n, 3, seed);
            let k = gram_matrix(&KernelSpec::rbf(bw), &data).unwrap();
            let s = 1 + (seed as usize) % n;
            let es = top_eigenpairs(&k, s).unwrap();
            let scale = es.sigmas()[0].max(1.0);
            for i in 0..s {
                let r = k.values() * es.vectors().column(i) - es.vectors().column(i) * es.sigmas()[i];
                prop_assert!(r.norm() <= 1e-6 * scale);
                prop_assert_eq!(es.lambdas()[i], es.sigmas()[i] / n as f64);
                if i > 0 {
                    prop_assert!(es.sigmas()[i - 1] >= es.sigmas()[i]);
                }
            }
            let gram_v = es.vectors().transpose() * es.vectors();
            for i in 0..s {
                for j in 0..s {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((gram_v[(i, j)] - want).abs() <= 1e-8);
                }
            }
        }
    }
}
