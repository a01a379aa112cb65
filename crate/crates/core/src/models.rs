//! Regressors: the eigenfunction least-squares learner and the KRR / LapRLS baselines.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigensystem::{eval_eigenfunction, top_eigenpairs, EigenSystem};
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, CrossGram, Dataset, GramMatrix, KernelSpec};

/// Relative singular-value cutoff for minimum-norm least squares.
pub const PINV_RCOND: f64 = 1e-10;

/// Anything that predicts a real value per point.
pub trait Regressor {
    fn predict_batch(&self, points: &Dataset) -> Result<Vec<f64>>;
}

/// Minimum-norm least-squares solution of `a x = b` via SVD, dropping singular
/// values at or below `rcond * max_singular_value`.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    let svd = a.clone().svd(true, true);
    let (u, v_t) = match (svd.u.as_ref(), svd.v_t.as_ref()) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Singular("SVD did not produce singular vectors".into())),
    };
    let top = svd.singular_values.max();
    let cutoff = rcond * top;
    let utb = u.transpose() * b;
    let mut scaled = DVector::zeros(svd.singular_values.len());
    for i in 0..scaled.len() {
        let sv = svd.singular_values[i];
        if sv > cutoff && sv > 0.0 {
            scaled[i] = utb[i] / sv;
        }
    }
    Ok(v_t.transpose() * scaled)
}

fn check_labels(y: &[f64], expected: usize) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("labels"));
    }
    if y.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: y.len(),
        });
    }
    if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    Ok(())
}

/// Fitted `g(x) = sum_j gamma_j phi_j(x)` over the leading `s` eigenfunctions.
#[derive(Debug, Clone)]
pub struct SsslModel {
    gamma: DVector<f64>,
    eigensystem: Arc<EigenSystem>,
    train: Arc<Dataset>,
    kernel: KernelSpec,
    s: usize,
    /// `V_s diag(sigma^{-1/2}) gamma`: prediction is `k(x)^T dual`.
    dual: DVector<f64>,
}

/// Computes the top `s` eigenpairs of `k` and fits the coefficients.
pub fn fit_sssl(
    k: &GramMatrix,
    k_b: &CrossGram,
    y_l: &[f64],
    s: usize,
    kernel: KernelSpec,
    train: Arc<Dataset>,
) -> Result<SsslModel> {
    let es = Arc::new(top_eigenpairs(k, s)?);
    SsslModel::fit(es, k_b, y_l, s, kernel, train)
}

impl SsslModel {
    /// Fit on a precomputed eigensystem (which may hold more than `s` pairs).
    ///
    /// The coefficients are the minimum-norm minimizer of the labeled squared error,
    /// so an underdetermined problem (`s > n`) still has a well-defined answer.
    pub fn fit(
        eigensystem: Arc<EigenSystem>,
        k_b: &CrossGram,
        y_l: &[f64],
        s: usize,
        kernel: KernelSpec,
        train: Arc<Dataset>,
    ) -> Result<SsslModel> {
        check_labels(y_l, k_b.cols())?;
        if train.len() != eigensystem.n_points() || k_b.rows() != eigensystem.n_points() {
            return Err(Error::DimensionMismatch {
                expected: eigensystem.n_points(),
                found: train.len().min(k_b.rows()),
            });
        }
        if s == 0 || s > eigensystem.s() {
            return Err(Error::invalid(
                "s",
                format!("must be in 1..={}, got {s}", eigensystem.s()),
            ));
        }
        let map = eigensystem.feature_map(s)?;
        let phi = k_b.values().transpose() * &map;
        let gamma = lstsq_min_norm(&phi, &DVector::from_column_slice(y_l), PINV_RCOND)?;
        let dual = &map * &gamma;
        Ok(SsslModel {
            gamma,
            eigensystem,
            train,
            kernel,
            s,
            dual,
        })
    }

    /// Fit when the labeled points are themselves training points, given by position.
    ///
    /// Uses `phi_i(x_j) = sqrt(sigma_i) v_i[j]`, which avoids forming the cross-Gram.
    pub fn fit_on_training_points(
        eigensystem: Arc<EigenSystem>,
        labeled: &[usize],
        y_l: &[f64],
        s: usize,
        kernel: KernelSpec,
        train: Arc<Dataset>,
    ) -> Result<SsslModel> {
        check_labels(y_l, labeled.len())?;
        let n_points = eigensystem.n_points();
        if train.len() != n_points {
            return Err(Error::DimensionMismatch {
                expected: n_points,
                found: train.len(),
            });
        }
        if let Some(&bad) = labeled.iter().find(|&&i| i >= n_points) {
            return Err(Error::IndexOutOfRange { index: bad, len: n_points });
        }
        if s == 0 || s > eigensystem.s() {
            return Err(Error::invalid(
                "s",
                format!("must be in 1..={}, got {s}", eigensystem.s()),
            ));
        }
        let map = eigensystem.feature_map(s)?;
        let phi = training_features(&eigensystem, s).select_rows(labeled);
        let gamma = lstsq_min_norm(&phi, &DVector::from_column_slice(y_l), PINV_RCOND)?;
        let dual = &map * &gamma;
        Ok(SsslModel {
            gamma,
            eigensystem,
            train,
            kernel,
            s,
            dual,
        })
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.eigensystem
    }

    /// Coefficients against the training points: `prediction(x) = k(x)^T dual`.
    pub fn dual_coeffs(&self) -> &DVector<f64> {
        &self.dual
    }

    /// Per-point path: explicit sum of eigenfunction values.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.train.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.train.feature_dim(),
                found: x.len(),
            });
        }
        let mut total = 0.0;
        for j in 0..self.s {
            let phi = eval_eigenfunction(&self.eigensystem, &self.kernel, &self.train, j, x)?;
            total += self.gamma[j] * phi;
        }
        Ok(total)
    }

    /// Predictions from precomputed kernel rows (`queries x N` against the training points).
    pub fn predict_from_kernel(&self, kernel_rows: &DMatrix<f64>) -> Result<DVector<f64>> {
        if kernel_rows.ncols() != self.dual.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dual.len(),
                found: kernel_rows.ncols(),
            });
        }
        Ok(kernel_rows * &self.dual)
    }
}

impl Regressor for SsslModel {
    fn predict_batch(&self, points: &Dataset) -> Result<Vec<f64>> {
        let k = kernel_matrix(&self.kernel, points, &self.train)?;
        Ok(self.predict_from_kernel(&k)?.as_slice().to_vec())
    }
}

/// Eigenfunction values at the training points, `V_s diag(sigma)^{1/2}` (`N x s`).
pub fn training_features(es: &EigenSystem, s: usize) -> DMatrix<f64> {
    let mut f = es.vectors().columns(0, s).into_owned();
    for (j, mut col) in f.column_iter_mut().enumerate() {
        col *= es.sigmas()[j].sqrt();
    }
    f
}

/// Convenience wrapper matching the per-point prediction contract.
pub fn predict_sssl(model: &SsslModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

/// The closed form `D^{1/2} [V^T K_B K_B^T V]^{-1} V^T K_B y` for the coefficients.
///
/// Requires the `s x s` normal matrix to be invertible; [`SsslModel::fit`] does not.
pub fn closed_form_gamma(
    es: &EigenSystem,
    k_b: &CrossGram,
    y_l: &[f64],
    s: usize,
) -> Result<DVector<f64>> {
    check_labels(y_l, k_b.cols())?;
    if k_b.rows() != es.n_points() {
        return Err(Error::DimensionMismatch {
            expected: es.n_points(),
            found: k_b.rows(),
        });
    }
    if s == 0 || s > es.s() {
        return Err(Error::invalid("s", format!("must be in 1..={}", es.s())));
    }
    es.require_nonnull(s)?;
    let v = es.vectors().columns(0, s);
    let vt_kb = v.transpose() * k_b.values();
    let normal = &vt_kb * vt_kb.transpose();
    let rhs = &vt_kb * DVector::from_column_slice(y_l);
    let solved = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("normal matrix V^T K_B K_B^T V".into()))?;
    Ok(DVector::from_iterator(
        s,
        (0..s).map(|j| es.sigmas()[j].sqrt() * solved[j]),
    ))
}

/// Kernel ridge regression on the labeled points only.
#[derive(Debug, Clone)]
pub struct KrrModel {
    dual_coeffs: DVector<f64>,
    labeled_points: Arc<Dataset>,
    kernel: KernelSpec,
    ridge: f64,
}

/// `coeffs = (K_ll + ridge I)^{-1} y`.
pub fn fit_krr(
    k_ll: &GramMatrix,
    y_l: &[f64],
    ridge: f64,
    kernel: KernelSpec,
    labeled_points: Arc<Dataset>,
) -> Result<KrrModel> {
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge", format!("must be positive, got {ridge}")));
    }
    let n = k_ll.n_points();
    check_labels(y_l, n)?;
    if labeled_points.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labeled_points.len(),
        });
    }
    let a = k_ll.values() + DMatrix::identity(n, n) * ridge;
    let y = DVector::from_column_slice(y_l);
    let dual_coeffs = match a.clone().cholesky() {
        Some(ch) => ch.solve(&y),
        None => a
            .lu()
            .solve(&y)
            .ok_or_else(|| Error::Singular("K_ll + ridge I; increase ridge".into()))?,
    };
    Ok(KrrModel {
        dual_coeffs,
        labeled_points,
        kernel,
        ridge,
    })
}

impl KrrModel {
    pub fn fit(kernel: KernelSpec, labeled_points: Arc<Dataset>, y_l: &[f64], ridge: f64) -> Result<Self> {
        let k = crate::kernels::gram_matrix(&kernel, &labeled_points)?;
        fit_krr(&k, y_l, ridge, kernel, labeled_points)
    }

    pub fn dual_coeffs(&self) -> &DVector<f64> {
        &self.dual_coeffs
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Predictions from kernel rows against the labeled points.
    pub fn predict_from_kernel(&self, kernel_rows: &DMatrix<f64>) -> Result<DVector<f64>> {
        if kernel_rows.ncols() != self.dual_coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dual_coeffs.len(),
                found: kernel_rows.ncols(),
            });
        }
        Ok(kernel_rows * &self.dual_coeffs)
    }
}

impl Regressor for KrrModel {
    fn predict_batch(&self, points: &Dataset) -> Result<Vec<f64>> {
        let k = kernel_matrix(&self.kernel, points, &self.labeled_points)?;
        Ok(self.predict_from_kernel(&k)?.as_slice().to_vec())
    }
}

/// Symmetrized k-nearest-neighbour graph with heat-kernel edge weights
/// `exp(-d^2 / (2 bandwidth^2))`. An edge exists when either endpoint lists the
/// other among its `k` nearest neighbours.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    k: usize,
    bandwidth: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn knn_lists(data: &Dataset, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = data.len();
    (0..n)
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, sq_dist(data.point(i), data.point(j))))
                .collect();
            let kk = k.min(d.len());
            if kk < d.len() {
                d.select_nth_unstable_by(kk, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                d.truncate(kk);
            }
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d
        })
        .collect()
}

impl KnnGraph {
    pub fn build(data: &Dataset, k: usize, bandwidth: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("graph_k", "must be at least 1"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("graph_bandwidth", "must be positive"));
        }
        let n = data.len();
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        let lists = knn_lists(data, k);
        let mut weights: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
        for (i, list) in lists.iter().enumerate() {
            for &(j, d2) in list {
                let w = (-d2 / (2.0 * bandwidth * bandwidth)).exp();
                weights[i].insert(j, w);
                weights[j].insert(i, w);
            }
        }
        let adjacency: Vec<Vec<(usize, f64)>> =
            weights.into_iter().map(|m| m.into_iter().collect()).collect();
        let degree = adjacency.iter().map(|row| row.iter().map(|e| e.1).sum()).collect();
        Ok(KnnGraph {
            adjacency,
            degree,
            k,
            bandwidth,
        })
    }

    /// Median distance from each point to its k-th nearest neighbour; a default heat bandwidth.
    pub fn median_knn_distance(data: &Dataset, k: usize) -> Result<f64> {
        if data.len() < 2 || k == 0 {
            return Err(Error::invalid("dataset", "need at least two points and k >= 1"));
        }
        let mut d: Vec<f64> = knn_lists(data, k)
            .iter()
            .map(|l| l.last().map_or(0.0, |e| e.1.sqrt()))
            .collect();
        let mid = d.len() / 2;
        let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
        Ok(if *m > 0.0 { *m } else { 1.0 })
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Unnormalized Laplacian `L = D - W` as a dense matrix.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut l = DMatrix::zeros(n, n);
        for (i, row) in self.adjacency.iter().enumerate() {
            l[(i, i)] = self.degree[i];
            for &(j, w) in row {
                l[(i, j)] -= w;
            }
        }
        l
    }

    /// `L x` for a dense block `x` with one row per graph node.
    pub fn apply_laplacian(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (i, row) in self.adjacency.iter().enumerate() {
            for c in 0..x.ncols() {
                let mut acc = self.degree[i] * x[(i, c)];
                for &(j, w) in row {
                    acc -= w * x[(j, c)];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapRlsParams {
    pub ridge: f64,
    pub laplacian_weight: f64,
}

impl LapRlsParams {
    fn validate(&self) -> Result<()> {
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(Error::invalid("ridge", "must be positive"));
        }
        if !(self.laplacian_weight >= 0.0 && self.laplacian_weight.is_finite()) {
            return Err(Error::invalid("laplacian_weight", "must be non-negative"));
        }
        Ok(())
    }
}

/// Laplacian regularized least squares, expanded over every training point.
#[derive(Debug, Clone)]
pub struct LapRlsModel {
    dual_coeffs: DVector<f64>,
    train: Arc<Dataset>,
    kernel: KernelSpec,
    params: LapRlsParams,
    graph_k: usize,
    graph_bandwidth: f64,
}

fn check_labeled(labeled: &[usize], y_l: &[f64], n: usize) -> Result<()> {
    check_labels(y_l, labeled.len())?;
    if let Some(&bad) = labeled.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    Ok(())
}

/// Solves `(J K + ridge n I + laplacian_weight (n / N^2) L K) c = J y` densely.
///
/// `J` is the labeled indicator and `y` the labels zero-extended to all `N` points.
pub fn fit_laprls(
    k: &GramMatrix,
    graph: &KnnGraph,
    labeled: &[usize],
    y_l: &[f64],
    params: LapRlsParams,
    kernel: KernelSpec,
    train: Arc<Dataset>,
) -> Result<LapRlsModel> {
    params.validate()?;
    let big_n = k.n_points();
    check_labeled(labeled, y_l, big_n)?;
    if graph.len() != big_n || train.len() != big_n {
        return Err(Error::DimensionMismatch {
            expected: big_n,
            found: graph.len().min(train.len()),
        });
    }
    let n = labeled.len() as f64;
    let beta = params.laplacian_weight * n / (big_n as f64 * big_n as f64);
    let mut a = graph.apply_laplacian(k.values()) * beta;
    let mut rhs = DVector::zeros(big_n);
    for (&i, &y) in labeled.iter().zip(y_l) {
        let mut row = a.row_mut(i);
        row += k.values().row(i);
        rhs[i] = y;
    }
    for i in 0..big_n {
        a[(i, i)] += params.ridge * n;
    }
    let dual_coeffs = a.lu().solve(&rhs).ok_or_else(|| {
        Error::Singular("LapRLS system is singular; increase the ridge".into())
    })?;
    if dual_coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(
            "LapRLS solution is not finite; increase the ridge".into(),
        ));
    }
    Ok(LapRlsModel {
        dual_coeffs,
        train,
        kernel,
        params,
        graph_k: graph.k(),
        graph_bandwidth: graph.bandwidth(),
    })
}

/// LapRLS restricted to the span of the leading eigenvectors of `K`.
///
/// With `F = V_r diag(sigma)^{1/2}` (so `K ~ F F^T`), the primal problem
/// `(F^T J F + ridge n I + beta F^T L F) w = F_l^T y` is `r x r`. It coincides
/// with [`fit_laprls`] when every non-null eigenpair is kept. `F^T L F` is
/// computed once, so fits for many label sets and ridges stay cheap.
#[derive(Debug, Clone)]
pub struct SpectralLapRls {
    features: DMatrix<f64>,
    /// `V_r diag(sigma)^{-1/2}`, mapping primal weights to dual coefficients.
    dual_map: DMatrix<f64>,
    smoothness: DMatrix<f64>,
    graph_k: usize,
    graph_bandwidth: f64,
}

impl SpectralLapRls {
    /// Uses at most `max_rank` leading non-null eigenpairs of `es`.
    pub fn new(es: &EigenSystem, graph: &KnnGraph, max_rank: usize) -> Result<Self> {
        if graph.len() != es.n_points() {
            return Err(Error::DimensionMismatch {
                expected: es.n_points(),
                found: graph.len(),
            });
        }
        let r = es.numerical_rank().min(max_rank);
        if r == 0 {
            return Err(Error::invalid("eigensystem", "no non-null eigenpairs"));
        }
        let dual_map = es.feature_map(r)?;
        let features = training_features(es, r);
        let lf = graph.apply_laplacian(&features);
        let mut smoothness = features.transpose() * lf;
        smoothness = (&smoothness + smoothness.transpose()) * 0.5;
        Ok(SpectralLapRls {
            features,
            dual_map,
            smoothness,
            graph_k: graph.k(),
            graph_bandwidth: graph.bandwidth(),
        })
    }

    pub fn rank(&self) -> usize {
        self.features.ncols()
    }

    /// `F = V_r diag(sigma)^{1/2}`: the model's values at the training points are `F w`.
    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// Dual coefficients `c` (so that predictions are `k(x)^T c`) for primal weights `w`.
    pub fn dual_from_primal(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.dual_map * w
    }

    /// Dual coefficients for each ridge value, sharing one eigendecomposition.
    pub fn fit_path(
        &self,
        labeled: &[usize],
        y_l: &[f64],
        laplacian_weight: f64,
        ridges: &[f64],
    ) -> Result<Vec<DVector<f64>>> {
        Ok(self
            .primal_path(labeled, y_l, laplacian_weight, ridges)?
            .iter()
            .map(|w| self.dual_from_primal(w))
            .collect())
    }

    /// Primal weights `w` for each ridge value.
    pub fn primal_path(
        &self,
        labeled: &[usize],
        y_l: &[f64],
        laplacian_weight: f64,
        ridges: &[f64],
    ) -> Result<Vec<DVector<f64>>> {
        let big_n = self.features.nrows();
        check_labeled(labeled, y_l, big_n)?;
        for &ridge in ridges {
            LapRlsParams {
                ridge,
                laplacian_weight,
            }
            .validate()?;
        }
        let n = labeled.len() as f64;
        let beta = laplacian_weight * n / (big_n as f64 * big_n as f64);
        let f_l = self.features.select_rows(labeled);
        let mut a = f_l.transpose() * &f_l + &self.smoothness * beta;
        a = (&a + a.transpose()) * 0.5;
        let b = f_l.transpose() * DVector::from_column_slice(y_l);
        let eig = a.symmetric_eigen();
        let qtb = eig.eigenvectors.transpose() * b;
        ridges
            .iter()
            .map(|&ridge| {
                let shift = ridge * n;
                let mut z = qtb.clone();
                for i in 0..z.len() {
                    let d = eig.eigenvalues[i] + shift;
                    if d <= 0.0 {
                        return Err(Error::Singular(
                            "spectral LapRLS system is singular; increase the ridge".into(),
                        ));
                    }
                    z[i] /= d;
                }
                Ok(&eig.eigenvectors * z)
            })
            .collect()
    }

    pub fn fit(
        &self,
        labeled: &[usize],
        y_l: &[f64],
        params: LapRlsParams,
        kernel: KernelSpec,
        train: Arc<Dataset>,
    ) -> Result<LapRlsModel> {
        if train.len() != self.features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.features.nrows(),
                found: train.len(),
            });
        }
        let mut path = self.fit_path(labeled, y_l, params.laplacian_weight, &[params.ridge])?;
        Ok(LapRlsModel {
            dual_coeffs: path.remove(0),
            train,
            kernel,
            params,
            graph_k: self.graph_k,
            graph_bandwidth: self.graph_bandwidth,
        })
    }
}

impl LapRlsModel {
    pub fn dual_coeffs(&self) -> &DVector<f64> {
        &self.dual_coeffs
    }

    pub fn params(&self) -> LapRlsParams {
        self.params
    }

    pub fn graph_k(&self) -> usize {
        self.graph_k
    }

    pub fn graph_bandwidth(&self) -> f64 {
        self.graph_bandwidth
    }

    pub fn predict_from_kernel(&self, kernel_rows: &DMatrix<f64>) -> Result<DVector<f64>> {
        if kernel_rows.ncols() != self.dual_coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dual_coeffs.len(),
                found: kernel_rows.ncols(),
            });
        }
        Ok(kernel_rows * &self.dual_coeffs)
    }
}

impl Regressor for LapRlsModel {
    fn predict_batch(&self, points: &Dataset) -> Result<Vec<f64>> {
        let k = kernel_matrix(&self.kernel, points, &self.train)?;
        Ok(self.predict_from_kernel(&k)?.as_slice().to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Mse,
    Rmse,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Rmse => "rmse",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Metric::Mse),
            "rmse" => Ok(Metric::Rmse),
            other => Err(Error::invalid("metric", format!("unknown metric `{other}`"))),
        }
    }
}

pub fn regression_error(predictions: &[f64], truth: &[f64], metric: Metric) -> Result<f64> {
    if predictions.is_empty() || truth.is_empty() {
        return Err(Error::Empty("prediction or truth vector"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predictions.len(),
        });
    }
    let mse = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(match metric {
        Metric::Mse => mse,
        Metric::Rmse => mse.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{cross_gram, gram_matrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect();
        Dataset::from_flat(v, d, None).unwrap()
    }

    fn random_labels(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn constant_kernel_fits_label_mean() {
        let data = Arc::new(Dataset::from_rows(&[vec![1.0], vec![2.0], vec![5.0], vec![0.5]]).unwrap());
        let spec = KernelSpec::LinearNormalized;
        let k = gram_matrix(&spec, &data).unwrap();
        let labeled = [0, 2, 3];
        let kb = k.columns(&labeled).unwrap();
        let y = [1.0, 4.0, -2.0];
        let model = fit_sssl(&k, &kb, &y, 1, spec, data.clone()).unwrap();
        for x in [[0.3], [9.0], [1.0]] {
            assert!((model.predict(&x).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gamma_predicts_zero() {
        let data = Arc::new(random_points(5, 2, 1));
        let spec = KernelSpec::rbf(0.5);
        let k = gram_matrix(&spec, &data).unwrap();
        let kb = k.columns(&[0, 1]).unwrap();
        let model = fit_sssl(&k, &kb, &[0.0, 0.0], 2, spec, data).unwrap();
        assert!(model.gamma().iter().all(|&g| g == 0.0));
        assert_eq!(model.predict(&[0.2, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn full_basis_interpolates() {
        let data = Arc::new(random_points(8, 2, 4));
        let spec = KernelSpec::rbf(0.4);
        let k = gram_matrix(&spec, &data).unwrap();
        let es = Arc::new(top_eigenpairs(&k, 8).unwrap());
        let s = es.numerical_rank();
        let all: Vec<usize> = (0..8).collect();
        let kb = k.columns(&all).unwrap();
        let y = random_labels(8, 4);
        let model = SsslModel::fit(es, &kb, &y, s, spec, data.clone()).unwrap();
        for i in 0..8 {
            assert!((model.predict(data.point(i)).unwrap() - y[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn gamma_matches_normal_equations_oracle() {
        let data = Arc::new(random_points(5, 2, 12));
        let spec = KernelSpec::rbf(0.7);
        let k = gram_matrix(&spec, &data).unwrap();
        let labeled = [0, 2, 3, 4];
        let kb = cross_gram(&spec, &data, &labeled).unwrap();
        let y = random_labels(4, 12);
        let model = fit_sssl(&k, &kb, &y, 2, spec, data.clone()).unwrap();

        // Oracle: explicit Phi from per-point eigenfunction sums, then normal equations.
        let es = model.eigensystem();
        let phi = DMatrix::from_fn(4, 2, |r, j| {
            eval_eigenfunction(es, &spec, &data, j, data.point(labeled[r])).unwrap()
        });
        let gamma = (phi.transpose() * &phi)
            .lu()
            .solve(&(phi.transpose() * DVector::from_column_slice(&y)))
            .unwrap();
        assert!((model.gamma() - &gamma).amax() < 1e-8);

        let closed = closed_form_gamma(es, &kb, &y, 2).unwrap();
        assert!((closed - gamma).amax() < 1e-8);
    }

    #[test]
    fn predict_paths_agree() {
        let data = Arc::new(random_points(15, 3, 31));
        let spec = KernelSpec::rbf(0.6);
        let k = gram_matrix(&spec, &data).unwrap();
        let labeled = [1, 3, 5, 7, 9, 11];
        let kb = k.columns(&labeled).unwrap();
        let model = fit_sssl(&k, &kb, &random_labels(6, 31), 4, spec, data).unwrap();
        let queries = random_points(10, 3, 99);
        let batch = model.predict_batch(&queries).unwrap();
        for (i, q) in queries.points().enumerate() {
            assert!((model.predict(q).unwrap() - batch[i]).abs() < 1e-10);
        }
        assert!(model.predict(&[0.1]).is_err());
    }

    #[test]
    fn training_point_fit_matches_cross_gram_fit() {
        let data = Arc::new(random_points(20, 2, 21));
        let spec = KernelSpec::rbf(0.5);
        let k = gram_matrix(&spec, &data).unwrap();
        let es = Arc::new(top_eigenpairs(&k, 8).unwrap());
        let labeled = [3, 0, 17, 9, 12];
        let kb = k.columns(&labeled).unwrap();
        let y = random_labels(5, 21);
        for s in [1, 3, 5, 8] {
            let a = SsslModel::fit(es.clone(), &kb, &y, s, spec, data.clone()).unwrap();
            let b = SsslModel::fit_on_training_points(es.clone(), &labeled, &y, s, spec, data.clone()).unwrap();
            assert!((a.gamma() - b.gamma()).amax() < 1e-8 * a.gamma().amax().max(1.0));
        }
        assert!(SsslModel::fit_on_training_points(es, &[20], &[1.0], 1, spec, data).is_err());
    }

    #[test]
    fn sssl_rejects_bad_inputs() {
        let data = Arc::new(Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap());
        let spec = KernelSpec::LinearNormalized;
        let k = gram_matrix(&spec, &data).unwrap();
        let kb = k.columns(&[0]).unwrap();
        // rank one: s = 2 selects a null eigenpair
        assert!(matches!(
            fit_sssl(&k, &kb, &[1.0], 2, spec, data.clone()),
            Err(Error::NullEigenpair { .. })
        ));
        assert!(fit_sssl(&k, &kb, &[], 1, spec, data.clone()).is_err());
        assert!(fit_sssl(&k, &kb, &[1.0, 2.0], 1, spec, data).is_err());
    }

    #[test]
    fn underdetermined_fit_is_minimum_norm() {
        let data = Arc::new(random_points(10, 2, 8));
        let spec = KernelSpec::rbf(0.3);
        let k = gram_matrix(&spec, &data).unwrap();
        let labeled = [2, 6];
        let kb = k.columns(&labeled).unwrap();
        let y = [1.0, -1.0];
        let model = fit_sssl(&k, &kb, &y, 5, spec, data.clone()).unwrap();
        // Interpolates the two labels and gamma lies in the row space of Phi.
        for (r, &i) in labeled.iter().enumerate() {
            assert!((model.predict(data.point(i)).unwrap() - y[r]).abs() < 1e-8);
        }
        let phi = kb.values().transpose() * model.eigensystem().feature_map(5).unwrap();
        let proj = phi.transpose() * (&phi * phi.transpose()).try_inverse().unwrap() * &phi;
        assert!((&proj * model.gamma() - model.gamma()).amax() < 1e-8);
    }

    #[test]
    fn krr_small_cases() {
        let pts = Arc::new(Dataset::from_rows(&[vec![0.0]]).unwrap());
        let k = GramMatrix::from_matrix(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let m = fit_krr(&k, &[2.0], 1.0, KernelSpec::rbf(1.0), pts).unwrap();
        assert!((m.dual_coeffs()[0] - 1.0).abs() < 1e-15);
        assert!((m.predict_batch(&Dataset::from_rows(&[vec![0.0]]).unwrap()).unwrap()[0] - 1.0).abs() < 1e-15);

        let pts = Arc::new(random_points(6, 2, 3));
        let y = random_labels(6, 3);
        let big = KrrModel::fit(KernelSpec::rbf(0.5), pts.clone(), &y, 1e6).unwrap();
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for p in big.predict_batch(&pts).unwrap() {
            assert!(p.abs() <= ynorm * 6.0 / 1e6);
        }
        assert!(KrrModel::fit(KernelSpec::rbf(0.5), pts.clone(), &y, 0.0).is_err());
        assert!(KrrModel::fit(KernelSpec::rbf(0.5), pts, &y, -1.0).is_err());
    }

    #[test]
    fn krr_matches_dense_solve() {
        let pts = Arc::new(random_points(6, 3, 17));
        let spec = KernelSpec::rbf(0.8);
        let y = random_labels(6, 17);
        let m = KrrModel::fit(spec, pts.clone(), &y, 0.1).unwrap();
        let k = gram_matrix(&spec, &pts).unwrap().into_inner();
        let c = (&k + DMatrix::identity(6, 6) * 0.1)
            .try_inverse()
            .unwrap()
            * DVector::from_column_slice(&y);
        let want = &k * c;
        let got = m.predict_batch(&pts).unwrap();
        for i in 0..6 {
            assert!((want[i] - got[i]).abs() < 1e-8);
        }
    }

    fn laprls_setup(n: usize, seed: u64) -> (Arc<Dataset>, KernelSpec, GramMatrix, KnnGraph) {
        let data = Arc::new(random_points(n, 2, seed));
        let spec = KernelSpec::rbf(0.5);
        let k = gram_matrix(&spec, &data).unwrap();
        let graph = KnnGraph::build(&data, 3, 0.3).unwrap();
        (data, spec, k, graph)
    }

    #[test]
    fn laprls_without_graph_term_is_krr() {
        let (data, spec, k, graph) = laprls_setup(10, 5);
        let labeled = [0, 3, 4, 8];
        let y = random_labels(4, 5);
        let ridge = 0.01;
        let lap = fit_laprls(
            &k,
            &graph,
            &labeled,
            &y,
            LapRlsParams {
                ridge,
                laplacian_weight: 0.0,
            },
            spec,
            data.clone(),
        )
        .unwrap();
        let lab_pts = Arc::new(data.subset(&labeled).unwrap());
        let krr = KrrModel::fit(spec, lab_pts, &y, ridge * labeled.len() as f64).unwrap();
        let queries = random_points(7, 2, 55);
        let a = lap.predict_batch(&queries).unwrap();
        let b = krr.predict_batch(&queries).unwrap();
        for i in 0..7 {
            assert!((a[i] - b[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn laprls_matches_dense_oracle() {
        let (data, spec, k, graph) = laprls_setup(8, 6);
        let labeled = [1, 2, 6];
        let y = random_labels(3, 6);
        let params = LapRlsParams {
            ridge: 1e-3,
            laplacian_weight: 0.5,
        };
        let model = fit_laprls(&k, &graph, &labeled, &y, params, spec, data).unwrap();

        // Oracle: assemble J, L (from explicit edge weights), and solve.
        let n = 8;
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let l = graph.laplacian();
                    w[(i, j)] = -l[(i, j)];
                }
            }
        }
        let deg = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| w.row(i).sum()));
        let lap = deg - &w;
        let mut j = DMatrix::zeros(n, n);
        let mut yext = DVector::zeros(n);
        for (r, &i) in labeled.iter().enumerate() {
            j[(i, i)] = 1.0;
            yext[i] = y[r];
        }
        let beta = 0.5 * 3.0 / 64.0;
        let a = &j * k.values() + DMatrix::identity(n, n) * (1e-3 * 3.0) + lap * k.values() * beta;
        let c = a.lu().solve(&(&j * yext)).unwrap();
        assert!((model.dual_coeffs() - c).amax() < 1e-8);
    }

    #[test]
    fn laprls_identical_unlabeled_points_agree() {
        let mut rows: Vec<Vec<f64>> = random_points(7, 2, 9).points().map(|p| p.to_vec()).collect();
        rows.push(vec![0.42, 0.42]);
        rows.push(vec![0.42, 0.42]);
        let data = Arc::new(Dataset::from_rows(&rows).unwrap());
        let spec = KernelSpec::rbf(0.5);
        let k = gram_matrix(&spec, &data).unwrap();
        let graph = KnnGraph::build(&data, 3, 0.3).unwrap();
        let labeled = [0, 1, 2];
        let params = LapRlsParams {
            ridge: 0.01,
            laplacian_weight: 1.0,
        };
        let m = fit_laprls(&k, &graph, &labeled, &[1.0, -1.0, 0.5], params, spec, data.clone()).unwrap();
        let p = m.predict_batch(&data).unwrap();
        assert!((p[7] - p[8]).abs() < 1e-10);
    }

    #[test]
    fn spectral_laprls_matches_dense_when_full_rank() {
        let data = Arc::new(random_points(12, 2, 15));
        let spec = KernelSpec::rbf(0.15);
        let k = gram_matrix(&spec, &data).unwrap();
        let graph = KnnGraph::build(&data, 4, 0.2).unwrap();
        let es = top_eigenpairs(&k, 12).unwrap();
        assert_eq!(es.numerical_rank(), 12);
        let labeled = [0, 5, 7, 11];
        let y = random_labels(4, 15);
        let params = LapRlsParams {
            ridge: 1e-2,
            laplacian_weight: 2.0,
        };
        let dense = fit_laprls(&k, &graph, &labeled, &y, params, spec, data.clone()).unwrap();
        let spectral = SpectralLapRls::new(&es, &graph, 64)
            .unwrap()
            .fit(&labeled, &y, params, spec, data.clone())
            .unwrap();
        let a = dense.predict_batch(&data).unwrap();
        let b = spectral.predict_batch(&data).unwrap();
        for i in 0..12 {
            assert!((a[i] - b[i]).abs() < 1e-6, "{} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn laprls_parameter_errors() {
        let (data, spec, k, graph) = laprls_setup(6, 2);
        let bad = LapRlsParams {
            ridge: 0.0,
            laplacian_weight: 1.0,
        };
        assert!(fit_laprls(&k, &graph, &[0], &[1.0], bad, spec, data.clone()).is_err());
        let bad = LapRlsParams {
            ridge: 1.0,
            laplacian_weight: -1.0,
        };
        assert!(fit_laprls(&k, &graph, &[0], &[1.0], bad, spec, data.clone()).is_err());
        assert!(KnnGraph::build(&data, 0, 1.0).is_err());
    }

    #[test]
    fn regression_error_values() {
        assert_eq!(regression_error(&[1.0, 2.0], &[1.0, 2.0], Metric::Mse).unwrap(), 0.0);
        assert_eq!(regression_error(&[0.0, 0.0], &[1.0, 1.0], Metric::Mse).unwrap(), 1.0);
        let v = regression_error(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0], Metric::Mse).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        let r = regression_error(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0], Metric::Rmse).unwrap();
        assert!((r - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(matches!(regression_error(&[], &[], Metric::Mse), Err(Error::Empty(_))));
        assert!(regression_error(&[1.0], &[1.0, 2.0], Metric::Mse).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn label_scaling_is_equivariant(seed in 0u64..5000, c in -5.0f64..5.0) {
            let data = Arc::new(random_points(12, 2, seed));
            let spec = KernelSpec::rbf(0.5);
            let k = gram_matrix(&spec, &data).unwrap();
            let labeled = [0, 2, 4, 6, 8, 10];
            let kb = k.columns(&labeled).unwrap();
            let y = random_labels(6, seed);
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let m1 = fit_sssl(&k, &kb, &y, 3, spec, data.clone()).unwrap();
            let m2 = fit_sssl(&k, &kb, &ys, 3, spec, data.clone()).unwrap();
            let scale = m1.gamma().amax().max(1.0) * c.abs().max(1.0);
            prop_assert!((m1.gamma() * c - m2.gamma()).amax() <= 1e-9 * scale);
            let p1 = m1.predict_batch(&data).unwrap();
            let p2 = m2.predict_batch(&data).unwrap();
            let truth: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
            let ts: Vec<f64> = truth.iter().map(|v| v * c).collect();
            let e1 = regression_error(&p1, &truth, Metric::Rmse).unwrap();
            let e2 = regression_error(&p2, &ts, Metric::Rmse).unwrap();
            prop_assert!((e1 * c.abs() - e2).abs() <= 1e-8 * e1.max(1.0) * c.abs().max(1.0));
        }

        #[test]
        fn training_residual_never_grows_with_s(seed in 0u64..5000) {
            let data = Arc::new(random_points(14, 2, seed));
            let spec = KernelSpec::rbf(0.4);
            let k = gram_matrix(&spec, &data).unwrap();
            let es = Arc::new(top_eigenpairs(&k, 14).unwrap());
            let labeled: Vec<usize> = (0..14).step_by(2).collect();
            let kb = k.columns(&labeled).unwrap();
            let y = random_labels(labeled.len(), seed);
            let mut prev = f64::INFINITY;
            for s in 1..=es.numerical_rank().min(10) {
                let m = SsslModel::fit(es.clone(), &kb, &y, s, spec, data.clone()).unwrap();
                let rows = k.values().select_rows(&labeled);
                let pred = m.predict_from_kernel(&rows).unwrap();
                let obj: f64 = pred.iter().zip(&y).map(|(p, t)| (p - t) * (p - t)).sum();
                prop_assert!(obj <= prev + 1e-9);
                prev = obj;
            }
        }

        #[test]
        fn predictions_ignore_eigenvector_signs(seed in 0u64..5000, flip in 0usize..4) {
            let data = Arc::new(random_points(10, 2, seed));
            let spec = KernelSpec::rbf(0.5);
            let k = gram_matrix(&spec, &data).unwrap();
            let es = top_eigenpairs(&k, 4).unwrap();
            let mut v = es.vectors().clone();
            v.column_mut(flip).neg_mut();
            let flipped = EigenSystem::from_parts(es.sigmas().clone(), v).unwrap();
            let labeled = [0, 1, 3, 6, 9];
            let kb = k.columns(&labeled).unwrap();
            let y = random_labels(5, seed);
            let a = SsslModel::fit(Arc::new(es), &kb, &y, 4, spec, data.clone()).unwrap();
            let b = SsslModel::fit(Arc::new(flipped), &kb, &y, 4, spec, data.clone()).unwrap();
            let q = random_points(6, 2, seed + 1);
            let pa = a.predict_batch(&q).unwrap();
            let pb = b.predict_batch(&q).unwrap();
            for i in 0..6 {
                prop_assert!((pa[i] - pb[i]).abs() < 1e-8);
            }
        }
    }
}
