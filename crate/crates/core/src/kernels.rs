//! Bounded Mercer kernels and Gram-matrix assembly.
//!
//! Every kernel exposed here satisfies `|k(x, x)| <= 1`. Unnormalized linear and
//! polynomial kernels are deliberately absent; use the normalized variants.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single feature vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(pos) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        if coords.is_empty() {
            return Err(Error::Empty("point has no coordinates"));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major collection of points sharing one feature dimension, with optional targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    dim: usize,
    targets: Option<Vec<f64>>,
}

impl Dataset {
    /// Build from a flat row-major buffer. An empty buffer gives an empty dataset.
    pub fn from_flat(values: Vec<f64>, dim: usize, targets: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature_dim", "must be positive"));
        }
        if values.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: values.len() % dim,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let n = values.len() / dim;
        if let Some(t) = &targets {
            if t.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: t.len(),
                });
            }
        }
        Ok(Dataset {
            values,
            dim,
            targets,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::Empty("no rows"))?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Dataset::from_flat(values, dim, None)
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        Dataset::from_rows(&rows)
    }

    pub fn with_targets(mut self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: targets.len(),
            });
        }
        self.targets = Some(targets);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn targets(&self) -> Option<&[f64]> {
        self.targets.as_deref()
    }

    /// Rows selected by `indices`, in that order. Targets follow when present.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let n = self.len();
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            values.extend_from_slice(self.point(i));
        }
        let targets = self
            .targets
            .as_ref()
            .map(|t| indices.iter().map(|&i| t[i]).collect());
        Ok(Dataset {
            values,
            dim: self.dim,
            targets,
        })
    }
}

/// Truncated cosine-series Mercer kernel on `[0, 1]`:
/// `k(x, y) = sum_{k=1}^{terms} a2 * k^-p * 2 cos(k pi x) cos(k pi y)`.
///
/// Its integral operator under the uniform measure has eigenvalues `a2 * k^-p`
/// and eigenfunctions `sqrt(2) cos(k pi x)` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSeries {
    pub a2: f64,
    pub p: f64,
    pub terms: usize,
}

impl CosineSeries {
    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.a2 * (k as f64).powf(-self.p)
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        // Chebyshev recurrence: cos(k t) = 2 cos(t) cos((k-1) t) - cos((k-2) t).
        let (cx, cy) = ((PI * x).cos(), (PI * y).cos());
        let (mut px, mut py) = (1.0, 1.0);
        let (mut qx, mut qy) = (cx, cy);
        let mut sum = 0.0;
        for k in 1..=self.terms {
            sum += self.eigenvalue(k) * 2.0 * (qx * qy);
            let nx = 2.0 * cx * qx - px;
            let ny = 2.0 * cy * qy - py;
            px = qx;
            py = qy;
            qx = nx;
            qy = ny;
        }
        sum
    }

    /// Rows `sqrt(2 a2 k^-p) cos(k pi x)` for `k = 1..=terms`, so `k(x, y)` is a row dot product.
    fn features<'a>(&self, xs: impl ExactSizeIterator<Item = &'a [f64]>) -> DMatrix<f64> {
        let scale: Vec<f64> = (1..=self.terms).map(|k| (2.0 * self.eigenvalue(k)).sqrt()).collect();
        let mut out = DMatrix::zeros(xs.len(), self.terms);
        for (i, x) in xs.enumerate() {
            let c = (PI * x[0]).cos();
            let (mut prev, mut cur) = (1.0, c);
            for (k, w) in scale.iter().enumerate() {
                out[(i, k)] = w * cur;
                let next = 2.0 * c * cur - prev;
                prev = cur;
                cur = next;
            }
        }
        out
    }

    /// Value of `k(x, x)` maximized over the domain: `2 * sum_k a2 k^-p`, attained at `x = 0`.
    pub fn diagonal_bound(&self) -> f64 {
        2.0 * (1..=self.terms).map(|k| self.eigenvalue(k)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-|x - y|^2 / (2 bandwidth^2))`
    Rbf { bandwidth: f64 },
    /// `<x, y> / (|x| |y|)`, zero when either vector is zero.
    LinearNormalized,
    /// `(<x, y> + 1)^degree`, normalized by the geometric mean of the diagonal values.
    PolynomialNormalized { degree: u32 },
    /// One-dimensional kernel with an exactly known spectrum; see [`CosineSeries`].
    CosineSeries(CosineSeries),
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Self {
        KernelSpec::Rbf { bandwidth }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { bandwidth } => {
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::invalid(
                        "bandwidth",
                        format!("must be positive and finite, got {bandwidth}"),
                    ));
                }
            }
            KernelSpec::LinearNormalized => {}
            KernelSpec::PolynomialNormalized { degree } => {
                if degree == 0 {
                    return Err(Error::invalid("degree", "must be at least 1"));
                }
            }
            KernelSpec::CosineSeries(c) => {
                if c.terms == 0 || !(c.a2 > 0.0) || !c.p.is_finite() {
                    return Err(Error::invalid(
                        "cosine_series",
                        "needs terms >= 1, a2 > 0 and finite p",
                    ));
                }
                if c.diagonal_bound() > 1.0 + 1e-12 {
                    return Err(Error::invalid(
                        "cosine_series",
                        format!("k(x, x) reaches {} > 1", c.diagonal_bound()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Checked kernel evaluation.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.validate()?;
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        if let KernelSpec::CosineSeries(_) = self {
            if x.len() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    found: x.len(),
                });
            }
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluation without validation. Every branch is symmetric in `(x, y)` bit for bit.
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::LinearNormalized => {
                let (xy, xx, yy) = dots(x, y);
                let denom = xx.sqrt() * yy.sqrt();
                if denom == 0.0 {
                    0.0
                } else {
                    (xy / denom).clamp(-1.0, 1.0)
                }
            }
            KernelSpec::PolynomialNormalized { degree } => {
                let (xy, xx, yy) = dots(x, y);
                let d = degree as i32;
                let num = (xy + 1.0).powi(d);
                let denom = (xx + 1.0).powi(d).sqrt() * (yy + 1.0).powi(d).sqrt();
                (num / denom).clamp(-1.0, 1.0)
            }
            KernelSpec::CosineSeries(c) => {
                // Order the arguments so the floating-point path is identical both ways.
                let (a, b) = if x[0] <= y[0] { (x[0], y[0]) } else { (y[0], x[0]) };
                c.eval(a, b)
            }
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        self.validate()?;
        if matches!(self, KernelSpec::CosineSeries(_)) && dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: dim,
            });
        }
        Ok(())
    }
}

fn dots(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut xy = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for (a, b) in x.iter().zip(y) {
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    (xy, xx, yy)
}

/// Free-function form of [`KernelSpec::eval`].
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

/// Kernel matrix `K = [k(x_i, x_j)]` over every point of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: DMatrix<f64>,
}

impl GramMatrix {
    /// Wrap an explicit symmetric matrix, e.g. one produced outside this crate.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if n == 0 {
            return Err(Error::Empty("gram matrix"));
        }
        if values.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: values.ncols(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if values[(i, j)] != values[(j, i)] {
                    return Err(Error::invalid(
                        "gram",
                        format!("not symmetric at ({i}, {j})"),
                    ));
                }
            }
        }
        Ok(GramMatrix { values })
    }

    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Principal submatrix over `indices` (in that order).
    pub fn submatrix(&self, indices: &[usize]) -> Result<GramMatrix> {
        let n = self.n_points();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        if indices.is_empty() {
            return Err(Error::Empty("submatrix indices"));
        }
        let m = indices.len();
        Ok(GramMatrix {
            values: DMatrix::from_fn(m, m, |i, j| self.values[(indices[i], indices[j])]),
        })
    }

    /// Columns of `K` at `indices`: the cross-Gram between all points and a labeled subset.
    pub fn columns(&self, indices: &[usize]) -> Result<CrossGram> {
        let n = self.n_points();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        if indices.is_empty() {
            return Err(Error::Empty("labeled indices"));
        }
        Ok(CrossGram {
            values: self.values.select_columns(indices),
        })
    }
}

/// `K_B = [k(x_i, x_j)]`, all points by labeled points.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossGram {
    values: DMatrix<f64>,
}

impl CrossGram {
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        CrossGram { values }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Assemble `K` by evaluating the upper triangle and mirroring it.
pub fn gram_matrix(spec: &KernelSpec, data: &Dataset) -> Result<GramMatrix> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }
    spec.check_dim(data.feature_dim())?;
    let mut values = match spec {
        KernelSpec::CosineSeries(c) => {
            let f = c.features(data.points());
            &f * f.transpose()
        }
        _ => {
            let mut upper = DMatrix::zeros(n, n);
            for j in 0..n {
                let xj = data.point(j);
                for i in 0..=j {
                    upper[(i, j)] = spec.eval_unchecked(data.point(i), xj);
                }
            }
            upper
        }
    };
    for j in 0..n {
        for i in (j + 1)..n {
            values[(i, j)] = values[(j, i)];
        }
    }
    Ok(GramMatrix { values })
}

/// `values[i][j] = k(x_i, x_{labeled[j]})`.
pub fn cross_gram(spec: &KernelSpec, all_points: &Dataset, labeled: &[usize]) -> Result<CrossGram> {
    let n = all_points.len();
    if labeled.is_empty() {
        return Err(Error::Empty("labeled indices"));
    }
    if let Some(&bad) = labeled.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    spec.check_dim(all_points.feature_dim())?;
    if let KernelSpec::CosineSeries(c) = spec {
        let f = c.features(all_points.points());
        let fl = c.features(labeled.iter().map(|&j| all_points.point(j)));
        return Ok(CrossGram { values: f * fl.transpose() });
    }
    let values = DMatrix::from_fn(n, labeled.len(), |i, j| {
        spec.eval_unchecked(all_points.point(i), all_points.point(labeled[j]))
    });
    Ok(CrossGram { values })
}

/// Kernel matrix between two point sets: `rows.len() x cols.len()`.
pub fn kernel_matrix(spec: &KernelSpec, rows: &Dataset, cols: &Dataset) -> Result<DMatrix<f64>> {
    if rows.feature_dim() != cols.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: cols.feature_dim(),
            found: rows.feature_dim(),
        });
    }
    spec.check_dim(rows.feature_dim())?;
    if let KernelSpec::CosineSeries(c) = spec {
        return Ok(c.features(rows.points()) * c.features(cols.points()).transpose());
    }
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        spec.eval_unchecked(rows.point(i), cols.point(j))
    }))
}

/// Kernel vector `[k(x_1, x), ..., k(x_N, x)]` against every point of `train`.
pub fn kernel_vector(spec: &KernelSpec, train: &Dataset, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != train.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: train.feature_dim(),
            found: x.len(),
        });
    }
    spec.check_dim(x.len())?;
    Ok(train.points().map(|xi| spec.eval_unchecked(xi, x)).collect())
}

/// Median Euclidean distance over all distinct pairs; the usual RBF bandwidth heuristic.
pub fn median_pairwise_distance(data: &Dataset) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::invalid("dataset", "need at least two points"));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = data
                .point(i)
                .iter()
                .zip(data.point(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.push(s.sqrt());
        }
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(*m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Dataset::from_flat(v, d, None).unwrap()
    }

    #[test]
    fn rbf_closed_form_values() {
        let k = KernelSpec::rbf(1.0);
        assert_eq!(k.eval(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        let v = k.eval(&[0.0], &[1.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.60653066).abs() < 1e-8);
    }

    #[test]
    fn linear_normalized_orthogonal_is_zero() {
        let k = KernelSpec::LinearNormalized;
        assert_eq!(k.eval(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((k.eval(&[2.0, 0.0], &[5.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(k.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn polynomial_normalized_diagonal_is_one() {
        let k = KernelSpec::PolynomialNormalized { degree: 3 };
        let v = k.eval(&[0.5, -1.5, 2.0], &[0.5, -1.5, 2.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(
            KernelSpec::rbf(0.0).eval(&[0.0], &[0.0]),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            KernelSpec::rbf(-1.0).eval(&[0.0], &[0.0]),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            KernelSpec::rbf(1.0).eval(&[0.0, 1.0], &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Point::new(vec![f64::NAN]).is_err());
        assert!(Dataset::from_flat(vec![1.0, f64::INFINITY], 1, None).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let k = KernelSpec::rbf(0.7);
        let one = Dataset::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(gram_matrix(&k, &one).unwrap().values()[(0, 0)], 1.0);

        let twins = Dataset::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let g = gram_matrix(&k, &twins).unwrap();
        assert!(g.values().iter().all(|&v| v == 1.0));

        let empty = Dataset::from_flat(vec![], 2, None).unwrap();
        assert!(matches!(gram_matrix(&k, &empty), Err(Error::Empty(_))));
    }

    #[test]
    fn gram_matches_elementwise_evaluation() {
        let data = random_dataset(3, 4, 7);
        let k = KernelSpec::rbf(0.9);
        let g = gram_matrix(&k, &data).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let direct = k.eval(data.point(i), data.point(j)).unwrap();
                assert_eq!(g.values()[(i, j)], direct);
            }
        }
    }

    #[test]
    fn cross_gram_selection() {
        let data = random_dataset(4, 2, 11);
        let k = KernelSpec::rbf(0.5);
        let g = gram_matrix(&k, &data).unwrap();

        let all: Vec<usize> = (0..4).collect();
        assert_eq!(cross_gram(&k, &data, &all).unwrap().values(), g.values());

        let first = cross_gram(&k, &data, &[0]).unwrap();
        assert_eq!(first.values().column(0), g.values().column(0));

        let perm = cross_gram(&k, &data, &[2, 0]).unwrap();
        for i in 0..4 {
            assert_eq!(perm.values()[(i, 0)], g.values()[(i, 2)]);
            assert_eq!(perm.values()[(i, 1)], g.values()[(i, 0)]);
        }
        assert_eq!(&g.columns(&[2, 0]).unwrap(), &perm);

        assert!(matches!(
            cross_gram(&k, &data, &[4]),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
    }

    #[test]
    fn cosine_series_checks_dimension_and_bound() {
        let c = CosineSeries {
            a2: 0.4,
            p: 3.0,
            terms: 16,
        };
        let k = KernelSpec::CosineSeries(c);
        assert!(k.eval(&[0.1, 0.2], &[0.1, 0.2]).is_err());
        let direct: f64 = (1..=16)
            .map(|j| {
                let j = j as f64;
                0.4 * j.powf(-3.0) * 2.0 * (j * PI * 0.3).cos() * (j * PI * 0.8).cos()
            })
            .sum();
        assert!((k.eval(&[0.3], &[0.8]).unwrap() - direct).abs() < 1e-13);

        let too_big = KernelSpec::CosineSeries(CosineSeries { a2: 1.0, ..c });
        assert!(too_big.validate().is_err());
    }

    #[test]
    fn cosine_series_matrices_match_pointwise() {
        let k = KernelSpec::CosineSeries(CosineSeries {
            a2: 0.3,
            p: 2.5,
            terms: 40,
        });
        let a = Dataset::from_flat((0..23).map(|i| (i as f64 * 0.37).fract()).collect(), 1, None).unwrap();
        let b = Dataset::from_flat(vec![0.0, 0.5, 0.99, 0.123], 1, None).unwrap();
        let g = gram_matrix(&k, &a).unwrap();
        let m = kernel_matrix(&k, &b, &a).unwrap();
        let c = cross_gram(&k, &a, &[3, 0, 7]).unwrap();
        for i in 0..a.len() {
            for j in 0..a.len() {
                let e = k.eval(a.point(i), a.point(j)).unwrap();
                assert!((g.values()[(i, j)] - e).abs() < 1e-13);
                assert_eq!(g.values()[(i, j)], g.values()[(j, i)]);
            }
            for (jj, &j) in [3usize, 0, 7].iter().enumerate() {
                assert!((c.values()[(i, jj)] - k.eval(a.point(i), a.point(j)).unwrap()).abs() < 1e-13);
            }
            for r in 0..b.len() {
                assert!((m[(r, i)] - k.eval(b.point(r), a.point(i)).unwrap()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn median_distance_of_line() {
        let data = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        // distances 1, 2, 3
        assert_eq!(median_pairwise_distance(&data).unwrap(), 2.0);
    }

    fn spec_strategy() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            (0.05f64..5.0).prop_map(KernelSpec::rbf),
            Just(KernelSpec::LinearNormalized),
            (1u32..5).prop_map(|degree| KernelSpec::PolynomialNormalized { degree }),
        ]
    }

    proptest! {
        #[test]
        fn kernel_is_exactly_symmetric_and_bounded(
            spec in spec_strategy(),
            x in prop::collection::vec(-10.0f64..10.0, 3),
            y in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let a = spec.eval(&x, &y).unwrap();
            let b = spec.eval(&y, &x).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!(a.abs() <= 1.0);
            prop_assert!(spec.eval(&x, &x).unwrap().abs() <= 1.0);
        }

        #[test]
        fn rbf_is_positive_and_one_only_on_diagonal(
            bw in 0.1f64..3.0,
            x in prop::collection::vec(-2.0f64..2.0, 2),
            y in prop::collection::vec(-2.0f64..2.0, 2),
        ) {
            let v = KernelSpec::rbf(bw).eval(&x, &y).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0);
            if x != y {
                // strictly below one unless the points coincide (or underflow of tiny distances)
                let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 / (2.0 * bw * bw) > 1e-15 {
                    prop_assert!(v < 1.0);
                }
            }
        }

        #[test]
        fn cross_gram_over_all_indices_is_bit_identical(seed in 0u64..1000, n in 1usize..12) {
            let data = random_dataset(n, 3, seed);
            let spec = KernelSpec::PolynomialNormalized { degree: 2 };
            let g = gram_matrix(&spec, &data).unwrap();
            let all: Vec<usize> = (0..n).collect();
            let c = cross_gram(&spec, &data, &all).unwrap();
            for (a, b) in g.values().iter().zip(c.values().iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn gram_is_psd_on_random_sets() {
        for seed in 0..20u64 {
            let n = 5 + (seed as usize * 7) % 46;
            let data = random_dataset(n, 3, seed);
            for spec in [
                KernelSpec::rbf(0.4),
                KernelSpec::LinearNormalized,
                KernelSpec::PolynomialNormalized { degree: 3 },
            ] {
                let g = gram_matrix(&spec, &data).unwrap();
                let eig = g.values().clone().symmetric_eigen();
                let min = eig.eigenvalues.min();
                assert!(min >= -1e-8 * n as f64, "min eigenvalue {min} for n={n}");
            }
        }
    }
}
